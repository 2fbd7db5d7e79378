//! Truncated power-series form of the Fisher blocks.
//!
//! Shifted copies `s(t + gamma Delta_ij)` are replaced by Taylor polynomials of
//! order `K`, which leaves only the moment tables `M_i^(k)`, `M~_i^(k)` and the
//! lag-power matrices `Gamma^(k)_ij = (tau_i - tau_j)^k`. All sums run in
//! nondimensional time (unit = waveform duration) and are rescaled at the end.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{CrlbError, Result};
use crate::fisher::{self, CrlbResult, FisherBlocks, Provenance};
use crate::quadrature::Quadrature;
use crate::scene::{self, TargetScene};
use crate::waveform::{self, WaveformMoments, WaveformSpec};

pub const DEFAULT_ORDER: usize = 4;

/// `Gamma^(k)_ij = ((i - j) delta / unit)^k`.
pub fn gamma_matrix_scaled(scene: &TargetScene, k: usize, unit: f64) -> DMatrix<f64> {
    let p = scene.num_scatterers();
    let d = scene.delta() / unit;
    DMatrix::from_fn(p, p, |i, j| ((i as f64 - j as f64) * d).powi(k as i32))
}

/// `Gamma^(k)` in seconds^k.
pub fn gamma_matrix(scene: &TargetScene, k: usize) -> DMatrix<f64> {
    gamma_matrix_scaled(scene, k, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesBlocks {
    pub order: usize,
    /// Blocks in SI units; `f33` is exact or truncated per `exact_f33`.
    pub blocks: FisherBlocks,
    pub exact_f33: bool,
    /// Largest `|Im F_ij^(K)| / |F_ij^(K)|` over the three scalar blocks.
    /// The sums are real in exact arithmetic; this measures rounding.
    pub imag_residual: f64,
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |a, b| a * b as f64)
}

fn sign(k: usize) -> f64 {
    if k % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Raw series terms in scaled units. `m` must be rescaled to `unit` already.
pub(crate) struct ScaledSeries {
    pub f11: Complex64,
    pub f12: Complex64,
    pub f22: Complex64,
    pub f31: DVector<Complex64>,
    pub f32: DVector<Complex64>,
    pub f33: DMatrix<Complex64>,
}

pub(crate) fn scaled_series(
    gammas: &[DMatrix<f64>],
    x: &DVector<Complex64>,
    m: &WaveformMoments,
    g: f64,
    n0: f64,
    order: usize,
) -> ScaledSeries {
    let p = x.len();
    let j = Complex64::new(0.0, 1.0);
    let gm = |k: usize| gammas[k].map(|v| Complex64::new(v, 0.0));
    // x^H Gamma^(n) x, and Gamma^(n) x.
    let q = |n: usize| (x.adjoint() * gm(n) * x)[(0, 0)];
    let gx = |n: usize| gm(n) * x;
    let gp = |e: i32| g.powi(e);

    let mut f111 = Complex64::new(0.0, 0.0);
    let mut f211 = f111;
    let mut f112 = f111;
    let mut f212 = f111;
    let mut f122 = f111;
    let mut f222 = f111;
    let mut f131 = DVector::<Complex64>::zeros(p);
    let mut f231 = f131.clone();
    let mut f132 = f131.clone();
    let mut f232 = f131.clone();
    let mut f133 = DMatrix::<Complex64>::zeros(p, p);
    let mut f233 = f133.clone();

    for k in 0..=order {
        let ki = k as i32;
        let s = sign(k);
        if 2 * k <= order {
            let c = 2.0 / (factorial(2 * k) * n0);
            f111 += q(2 * k) * (s * c * gp(2 * ki + 1) * m.m(0, k + 1));
            f112 += q(2 * k) * (-s * c * gp(2 * ki - 1) * m.m(1, k + 1));
            f122 += q(2 * k) * (s * c * gp(2 * ki - 3) * m.m(2, k + 1));
            f231 += gx(2 * k) * Complex64::new(-s * c * gp(2 * ki) * m.mt(0, k), 0.0);
            f132 += gx(2 * k)
                * Complex64::new(s * (2.0 * k as f64 - 1.0) * gp(2 * ki - 2) * m.m(0, k) / (factorial(2 * k) * n0), 0.0);
            f232 += gx(2 * k) * Complex64::new(s * c * gp(2 * ki - 2) * m.mt(1, k), 0.0);
            f133 += gm(2 * k) * Complex64::new(s * c * gp(2 * ki - 1) * m.m(0, k), 0.0);
        }
        if k >= 1 && 2 * k <= order {
            let c = (k as f64 - 1.0) / (factorial(2 * k - 1) * n0);
            f122 += q(2 * k) * (s * c * gp(2 * ki - 3) * m.m(0, k));
        }
        if 2 * k + 1 <= order {
            let c = 2.0 / (factorial(2 * k + 1) * n0);
            f211 += q(2 * k + 1) * (s * c * gp(2 * ki + 2) * m.mt(0, k + 1));
            f212 += q(2 * k + 1) * (-s * c * gp(2 * ki) * m.mt(1, k + 1));
            let kk = k as f64;
            f222 += q(2 * k + 1) * (s * c * kk * kk * gp(2 * ki - 2) * m.mt(0, k));
            f222 += q(2 * k + 1) * (s * c * gp(2 * ki - 2) * m.mt(2, k + 1));
            f132 += gx(2 * k + 1) * Complex64::new(-s * c * gp(2 * ki - 1) * m.m(1, k + 1), 0.0);
            f232 += gx(2 * k + 1) * Complex64::new(s * c * kk * gp(2 * ki - 1) * m.mt(0, k), 0.0);
            f233 += gm(2 * k + 1) * Complex64::new(s * c * gp(2 * ki) * m.mt(0, k), 0.0);
        }
        if k >= 1 && 2 * k - 1 <= order {
            let c = 2.0 / (factorial(2 * k - 1) * n0);
            f131 += gx(2 * k - 1) * Complex64::new(-s * c * gp(2 * ki - 1) * m.m(0, k), 0.0);
        }
    }
    ScaledSeries {
        f11: f111 + j * f211,
        f12: f112 + j * f212,
        f22: f122 + j * f222,
        f31: f131 + f231 * j,
        f32: f132 + f232 * j,
        f33: f133 + f233 * j,
    }
}

/// Moments needed for order `K`: up to `K + 1`.
pub fn required_moment_order(order: usize) -> usize {
    order + 1
}

/// Series blocks from precomputed SI moments (`k_max >= K + 1`). When
/// `exact_f33` is given it replaces the truncated nuisance block.
pub fn series_blocks_from_moments(
    scene: &TargetScene,
    m: &WaveformMoments,
    duration: f64,
    n0: f64,
    order: usize,
    exact_f33: Option<&DMatrix<Complex64>>,
) -> Result<SeriesBlocks> {
    let need = required_moment_order(order);
    if m.k_max < need {
        return Err(CrlbError::OrderOverflow {
            requested: need,
            max: m.k_max,
        });
    }
    if !(n0 > 0.0) {
        return Err(CrlbError::invalid("n0", "must be positive"));
    }
    let unit = duration;
    let ms = m.rescaled(unit);
    let gammas: Vec<DMatrix<f64>> = (0..=order + 1)
        .map(|k| gamma_matrix_scaled(scene, k, unit))
        .collect();
    let x = scene.coefficient_vector();
    let s = scaled_series(&gammas, &x, &ms, scene.gamma(), n0 / unit, order);

    let imag_residual = [s.f11, s.f12, s.f22]
        .iter()
        .map(|c| if c.norm() > 0.0 { c.im.abs() / c.norm() } else { 0.0 })
        .fold(0.0, f64::max);
    if imag_residual > 1e-8 {
        log::warn!("series scalar blocks carry a relative imaginary part of {imag_residual:e}");
    }
    let c = |v: f64| Complex64::new(v, 0.0);
    let f33 = match exact_f33 {
        Some(f) => f.clone(),
        None => s.f33.clone(),
    };
    Ok(SeriesBlocks {
        order,
        blocks: FisherBlocks {
            f11: s.f11.re / (unit * unit),
            f12: s.f12.re / unit,
            f22: s.f22.re,
            f31: s.f31 * c(1.0 / unit),
            f32: s.f32,
            f33,
            provenance: Provenance::Series(order),
        },
        exact_f33: exact_f33.is_some(),
        imag_residual,
    })
}

/// Exact nuisance block `2 Lambda / (gamma N_0)`.
pub fn exact_f33(
    scene: &TargetScene,
    spec: &WaveformSpec,
    n0: f64,
    quad: &Quadrature,
) -> Result<DMatrix<Complex64>> {
    let gram = scene::gram_matrix(scene, spec, quad)?;
    Ok(gram.lambda * Complex64::new(2.0 / (scene.gamma() * n0), 0.0))
}

pub fn series_blocks(
    scene: &TargetScene,
    spec: &WaveformSpec,
    n0: f64,
    order: usize,
    quad: &Quadrature,
) -> Result<SeriesBlocks> {
    let m = waveform::moments(spec, required_moment_order(order), quad)?;
    let f33 = exact_f33(scene, spec, n0, quad)?;
    series_blocks_from_moments(scene, &m, spec.duration(), n0, order, Some(&f33))
}

/// `K`-truncated CRLBs with the exact nuisance block.
pub fn approx_crlb(
    scene: &TargetScene,
    spec: &WaveformSpec,
    n0: f64,
    order: usize,
    quad: &Quadrature,
) -> Result<CrlbResult> {
    fisher::crlb(&series_blocks(scene, spec, n0, order, quad)?.blocks)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayRow {
    pub order: usize,
    pub crlb_tau: f64,
    pub crlb_gamma: f64,
    /// `|CRLB^(K) - CRLB| / CRLB`.
    pub gap_tau: f64,
    pub gap_gamma: f64,
    /// `rho^(K+1) / (K+1)!` with `rho = gamma * (tau_P - tau_1) * B`,
    /// the shape of the truncation bound.
    pub bound_shape: f64,
    /// Reduction failure at this order, if any. For an indefinite reduced
    /// matrix the CRLB fields hold the raw formula values; for a singular
    /// nuisance block they are NaN.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationDecay {
    pub reference: CrlbResult,
    pub rows: Vec<DecayRow>,
    pub rho: f64,
    /// True when both gap sequences are nonincreasing in `K`.
    pub monotone: bool,
}

/// Gaps of the truncated CRLBs against the integral representation.
/// Moments and the nuisance block are computed once for all orders.
/// With `exact_f33 = false` the nuisance block is truncated too.
pub fn truncation_decay(
    scene: &TargetScene,
    spec: &WaveformSpec,
    n0: f64,
    orders: &[usize],
    exact_f33_block: bool,
    quad: &Quadrature,
) -> Result<TruncationDecay> {
    let reference = fisher::scene_crlb(scene, spec, n0, quad)?;
    let k_top = orders.iter().copied().max().unwrap_or(0);
    let m = waveform::moments(spec, required_moment_order(k_top), quad)?;
    let f33 = if exact_f33_block {
        Some(exact_f33(scene, spec, n0, quad)?)
    } else {
        None
    };
    let params = waveform::EffectiveParams::from_moments(&m, spec.duration())?;
    let rho = scene.gamma()
        * (scene.num_scatterers() as f64 - 1.0)
        * scene.delta()
        * params.bandwidth;
    let mut rows = Vec::with_capacity(orders.len());
    for &k in orders {
        let sb = series_blocks_from_moments(scene, &m, spec.duration(), n0, k, f33.as_ref())?;
        let bound_shape = rho.powi(k as i32 + 1) / factorial(k + 1);
        let row = match fisher::crlb(&sb.blocks) {
            Ok(r) => DecayRow {
                order: k,
                crlb_tau: r.crlb_tau,
                crlb_gamma: r.crlb_gamma,
                gap_tau: (r.crlb_tau - reference.crlb_tau).abs() / reference.crlb_tau,
                gap_gamma: (r.crlb_gamma - reference.crlb_gamma).abs() / reference.crlb_gamma,
                bound_shape,
                failure: None,
            },
            // An indefinite truncated information matrix still yields the
            // formula values a22/det and a11/det; they are kept, flagged.
            Err(e @ CrlbError::NonpositiveDeterminant { a11, a22, det }) => {
                log::warn!("series reduction at K = {k} failed: {e}");
                let (t, g) = (a22 / det, a11 / det);
                DecayRow {
                    order: k,
                    crlb_tau: t,
                    crlb_gamma: g,
                    gap_tau: (t - reference.crlb_tau).abs() / reference.crlb_tau,
                    gap_gamma: (g - reference.crlb_gamma).abs() / reference.crlb_gamma,
                    bound_shape,
                    failure: Some(e.to_string()),
                }
            }
            Err(e @ CrlbError::SingularBlock(_)) => {
                log::warn!("series reduction at K = {k} failed: {e}");
                DecayRow {
                    order: k,
                    crlb_tau: f64::NAN,
                    crlb_gamma: f64::NAN,
                    gap_tau: f64::NAN,
                    gap_gamma: f64::NAN,
                    bound_shape,
                    failure: Some(e.to_string()),
                }
            }
            Err(e) => return Err(e),
        };
        rows.push(row);
    }
    // NaN gaps compare false, so a singular order breaks monotonicity.
    let monotone = rows
        .windows(2)
        .all(|w| w[1].gap_tau <= w[0].gap_tau && w[1].gap_gamma <= w[0].gap_gamma);
    Ok(TruncationDecay {
        reference,
        rows,
        rho,
        monotone,
    })
}
