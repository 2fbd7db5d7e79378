//! Fisher information for `theta = [tau, gamma, Re x, Im x]` and the CRLBs of
//! `tau` and `gamma` after eliminating the scattering coefficients.
//!
//! [`fisher_blocks`] evaluates the continuous-time (small-`delta`) limit of
//! the blocks as lag integrals of the envelope. Every pair integral depends
//! only on the lag `i - j`, so `2P - 1` quadratures cover the whole target.
//! [`fim_oracle_fd`] is an independent route: it differentiates the sampled
//! mean `Phi x` numerically and sums over samples.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CrlbError, Result};
use crate::quadrature::Quadrature;
use crate::scene::TargetScene;
use crate::waveform::{WaveformMoments, WaveformSpec};

/// Condition number of the nuisance block beyond which the reduction is refused.
pub const MAX_CONDITION: f64 = 1e12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Integral,
    Series(usize),
    FiniteDifference,
    ClosedForm,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Provenance::Integral => write!(f, "integral"),
            Provenance::Series(k) => write!(f, "series({k})"),
            Provenance::FiniteDifference => write!(f, "finite-difference"),
            Provenance::ClosedForm => write!(f, "closed-form"),
        }
    }
}

/// Blocks of the Fisher information with the coefficient blocks in complex form:
/// `f31 = F31 + j F41`, `f32 = F32 + j F42`, `f33 = F33 + j F43`.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherBlocks {
    pub f11: f64,
    pub f12: f64,
    pub f22: f64,
    pub f31: DVector<Complex64>,
    pub f32: DVector<Complex64>,
    pub f33: DMatrix<Complex64>,
    pub provenance: Provenance,
}

/// Effective 2x2 information for `(tau, gamma)` after the Schur reduction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SchurTerms {
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
    /// Condition number of the (symmetrised) nuisance block.
    pub condition: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrlbResult {
    pub crlb_tau: f64,
    pub crlb_gamma: f64,
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
    pub condition: f64,
    pub provenance: Provenance,
}

impl CrlbResult {
    /// The same bound at noise level `n0_new`, given that `self` was
    /// computed at `n0_old`. Every information term scales as `1 / N0`.
    pub fn at_noise_level(&self, n0_old: f64, n0_new: f64) -> CrlbResult {
        let r = n0_new / n0_old;
        CrlbResult {
            crlb_tau: self.crlb_tau * r,
            crlb_gamma: self.crlb_gamma * r,
            a11: self.a11 / r,
            a12: self.a12 / r,
            a22: self.a22 / r,
            ..*self
        }
    }
}

/// The six lag integrals at shift `d = gamma * (lag) * delta`, each over the
/// overlap of `[0, T]` with `[-d, T - d]`:
/// `[ s'* s'(+d),  t s'(+d)* s',  t (t+d) s'* s'(+d),  s* s'(+d),  t s(+d)* s',  s* s(+d) ]`.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct LagIntegrals {
    pub dd: Complex64,
    pub t_dd_rev: Complex64,
    pub tt_dd: Complex64,
    pub s_d: Complex64,
    pub t_s_d_rev: Complex64,
    pub s_s: Complex64,
}

pub(crate) fn lag_integrals(spec: &WaveformSpec, shift: f64, quad: &Quadrature) -> Result<LagIntegrals> {
    let t_len = spec.duration();
    let a = 0f64.max(-shift);
    let b = t_len.min(t_len - shift);
    if b <= a {
        return Ok(LagIntegrals::default());
    }
    let v = quad.integrate(
        |t| {
            let mut here = [ZERO; 2];
            let mut there = [ZERO; 2];
            spec.derivatives_into(t, &mut here);
            spec.derivatives_into(t + shift, &mut there);
            let (s0, s1) = (here[0], here[1]);
            let (u0, u1) = (there[0], there[1]);
            [
                s1.conj() * u1,
                u1.conj() * s1 * t,
                s1.conj() * u1 * (t * (t + shift)),
                s0.conj() * u1,
                u0.conj() * s1 * t,
                s0.conj() * u0,
            ]
        },
        a,
        b,
    )?;
    Ok(LagIntegrals {
        dd: v[0],
        t_dd_rev: v[1],
        tt_dd: v[2],
        s_d: v[3],
        t_s_d_rev: v[4],
        s_s: v[5],
    })
}

/// Lag integrals for every lag `-(P-1)..=(P-1)`, indexed by `lag + P - 1`.
pub(crate) fn all_lags(
    scene: &TargetScene,
    spec: &WaveformSpec,
    quad: &Quadrature,
) -> Result<Vec<LagIntegrals>> {
    let p = scene.num_scatterers() as i64;
    let step = scene.gamma() * scene.delta();
    (-(p - 1)..=(p - 1))
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&d| lag_integrals(spec, step * d as f64, quad))
        .collect()
}

/// Fisher blocks from the lag-integral representation.
pub fn fisher_blocks(
    scene: &TargetScene,
    spec: &WaveformSpec,
    n0: f64,
    quad: &Quadrature,
) -> Result<FisherBlocks> {
    if !(n0 > 0.0) {
        return Err(CrlbError::invalid("n0", "must be positive"));
    }
    spec.check_order(1)?;
    let lags = all_lags(scene, spec, quad)?;
    Ok(assemble_blocks(scene, &lags, n0))
}

pub(crate) fn assemble_blocks(scene: &TargetScene, lags: &[LagIntegrals], n0: f64) -> FisherBlocks {
    let p = scene.num_scatterers();
    let g = scene.gamma();
    let x = scene.coefficients();
    let at = |d: i64| &lags[(d + p as i64 - 1) as usize];

    let mut s11 = ZERO;
    let mut s12 = ZERO;
    let mut s22 = ZERO;
    let mut f31 = DVector::zeros(p);
    let mut f32 = DVector::zeros(p);
    let mut f33 = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            let d = i as i64 - j as i64;
            let w = x[i].conj() * x[j];
            s11 += w * at(d).dd;
            s12 += w * at(-d).t_dd_rev;
            s22 += w * at(d).tt_dd;
            f31[i] += x[j] * at(d).s_d;
            f32[i] += x[j] * at(-d).t_s_d_rev;
            f33[(i, j)] = at(d).s_s;
        }
    }
    FisherBlocks {
        f11: 2.0 * g / n0 * s11.re,
        f12: -2.0 / (g * n0) * s12.re,
        f22: 2.0 / (g * g * g * n0) * s22.re,
        f31: f31 * Complex64::new(-2.0 / n0, 0.0),
        f32: f32 * Complex64::new(2.0 / (g * g * n0), 0.0),
        f33: f33 * Complex64::new(2.0 / (g * n0), 0.0),
        provenance: Provenance::Integral,
    }
}

fn hermitian_part(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

fn condition_of(h: &DMatrix<Complex64>) -> Result<f64> {
    let eig = h.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
    if !(min > 0.0) {
        return Err(CrlbError::SingularBlock(format!(
            "nuisance block is not positive definite (smallest eigenvalue {min:e})"
        )));
    }
    Ok(max / min)
}

/// `a_ij = F_ij - Re{ f3i^H f33^-1 f3j }` using a Cholesky solve.
pub fn schur_reduce(blocks: &FisherBlocks) -> Result<SchurTerms> {
    let h = hermitian_part(&blocks.f33);
    let condition = condition_of(&h)?;
    if condition > MAX_CONDITION {
        return Err(CrlbError::SingularBlock(format!(
            "condition number {condition:e} exceeds {MAX_CONDITION:e}; the scene is ill-posed"
        )));
    }
    let chol = h.cholesky().ok_or_else(|| {
        CrlbError::SingularBlock("Cholesky factorisation of the nuisance block failed".into())
    })?;
    let z1 = chol.solve(&blocks.f31);
    let z2 = chol.solve(&blocks.f32);
    let q = |a: &DVector<Complex64>, z: &DVector<Complex64>| a.dotc(z).re;
    Ok(SchurTerms {
        a11: blocks.f11 - q(&blocks.f31, &z1),
        a12: blocks.f12 - 0.5 * (q(&blocks.f31, &z2) + q(&blocks.f32, &z1)),
        a22: blocks.f22 - q(&blocks.f32, &z2),
        condition,
    })
}

/// Reduction for coefficients known to be real (`b` not estimated):
/// `a_ij = F_ij - F3i^T F33^-1 F3j` with the real parts of the blocks.
pub fn schur_reduce_real(blocks: &FisherBlocks) -> Result<SchurTerms> {
    let h = hermitian_part(&blocks.f33).map(|c| c.re);
    let eig = h.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
    if !(min > 0.0) {
        return Err(CrlbError::SingularBlock(format!(
            "real nuisance block is not positive definite (smallest eigenvalue {min:e})"
        )));
    }
    let condition = max / min;
    if condition > MAX_CONDITION {
        return Err(CrlbError::SingularBlock(format!(
            "condition number {condition:e} exceeds {MAX_CONDITION:e}"
        )));
    }
    let chol = h
        .cholesky()
        .ok_or_else(|| CrlbError::SingularBlock("Cholesky factorisation failed".into()))?;
    let f31 = blocks.f31.map(|c| c.re);
    let f32 = blocks.f32.map(|c| c.re);
    let z1 = chol.solve(&f31);
    let z2 = chol.solve(&f32);
    Ok(SchurTerms {
        a11: blocks.f11 - f31.dot(&z1),
        a12: blocks.f12 - 0.5 * (f31.dot(&z2) + f32.dot(&z1)),
        a22: blocks.f22 - f32.dot(&z2),
        condition,
    })
}

/// `CRLB_tau = a22 / det`, `CRLB_gamma = a11 / det`.
pub fn crlb_from_terms(t: &SchurTerms, provenance: Provenance) -> Result<CrlbResult> {
    let det = t.a11 * t.a22 - t.a12 * t.a12;
    if !(det > 0.0) || !(t.a11 > 0.0) || !(t.a22 > 0.0) {
        return Err(CrlbError::NonpositiveDeterminant {
            a11: t.a11,
            a22: t.a22,
            det,
        });
    }
    Ok(CrlbResult {
        crlb_tau: t.a22 / det,
        crlb_gamma: t.a11 / det,
        a11: t.a11,
        a12: t.a12,
        a22: t.a22,
        condition: t.condition,
        provenance,
    })
}

pub fn crlb(blocks: &FisherBlocks) -> Result<CrlbResult> {
    crlb_from_terms(&schur_reduce(blocks)?, blocks.provenance)
}

/// CRLBs for real coefficients treated as known-real.
pub fn crlb_real(blocks: &FisherBlocks) -> Result<CrlbResult> {
    crlb_from_terms(&schur_reduce_real(blocks)?, blocks.provenance)
}

/// Integral-representation CRLBs for a scene in one call.
pub fn scene_crlb(
    scene: &TargetScene,
    spec: &WaveformSpec,
    n0: f64,
    quad: &Quadrature,
) -> Result<CrlbResult> {
    crlb(&fisher_blocks(scene, spec, n0, quad)?)
}

/// Closed-form single-scatterer CRLBs from the moments alone:
/// `a11 = 2 g x^2 M_0^(1) / N0`, `a12 = -2 x^2 M_1^(1) / (g N0)`,
/// `a22 = 2 x^2 (M_2^(1) - M_0^(0) / 4) / (g^3 N0)`.
pub fn crlb_single_from_moments(
    m: &WaveformMoments,
    x: f64,
    gamma: f64,
    n0: f64,
) -> Result<CrlbResult> {
    if m.m(0, 0) <= 0.0 || m.m(0, 1) <= 0.0 {
        return Err(CrlbError::DegenerateWaveform(
            "zero energy or zero derivative energy".into(),
        ));
    }
    if !(gamma > 0.0) || !(n0 > 0.0) || x == 0.0 {
        return Err(CrlbError::invalid("crlb_single", "need gamma > 0, N0 > 0, x != 0"));
    }
    let x2 = x * x;
    let terms = SchurTerms {
        a11: 2.0 * gamma * x2 * m.m(0, 1) / n0,
        a12: -2.0 * x2 * m.m(1, 1) / (gamma * n0),
        a22: 2.0 * x2 / (gamma.powi(3) * n0) * (m.m(2, 1) - m.m(0, 0) / 4.0),
        condition: 1.0,
    };
    crlb_from_terms(&terms, Provenance::ClosedForm)
}

pub fn crlb_single(
    spec: &WaveformSpec,
    x: f64,
    gamma: f64,
    n0: f64,
    quad: &Quadrature,
) -> Result<CrlbResult> {
    let m = crate::waveform::moments(spec, 1, quad)?;
    crlb_single_from_moments(&m, x, gamma, n0)
}

/// Sampled mean `Phi(tau + dtau, gamma) x` with the support of each echo
/// frozen at the nominal parameters, so that the window edges contribute no
/// derivative.
struct FrozenModel<'a> {
    scene: &'a TargetScene,
    spec: &'a WaveformSpec,
    /// Per scatterer, the half-open sample range inside the nominal support.
    ranges: Vec<(usize, usize)>,
}

impl<'a> FrozenModel<'a> {
    fn new(scene: &'a TargetScene, spec: &'a WaveformSpec) -> Self {
        let ranges = (0..scene.num_scatterers())
            .map(|p| {
                let start = scene.tau_samples() + p as i64;
                let inside: Vec<usize> = (0..scene.n_samples())
                    .filter(|&n| {
                        let arg = scene.gamma() * ((n as i64 - start) as f64 * scene.delta());
                        spec.in_support(arg)
                    })
                    .collect();
                match (inside.first(), inside.last()) {
                    (Some(&a), Some(&b)) => (a, b + 1),
                    _ => (0, 0),
                }
            })
            .collect();
        FrozenModel { scene, spec, ranges }
    }

    fn mean(&self, dtau: f64, gamma: f64, x: &[Complex64]) -> Vec<Complex64> {
        let mut mu = vec![ZERO; self.scene.n_samples()];
        let delta = self.scene.delta();
        for (p, &(lo, hi)) in self.ranges.iter().enumerate() {
            let start = self.scene.tau_samples() + p as i64;
            for (n, m) in mu.iter_mut().enumerate().take(hi).skip(lo) {
                let arg = gamma * ((n as i64 - start) as f64 * delta - dtau);
                *m += x[p] * self.spec.interior(arg, 0);
            }
        }
        mu
    }
}

fn central_difference(
    plus: Vec<Complex64>,
    minus: Vec<Complex64>,
    h: f64,
) -> Vec<Complex64> {
    plus.iter()
        .zip(minus.iter())
        .map(|(a, b)| (a - b) / (2.0 * h))
        .collect()
}

fn jacobian(model: &FrozenModel<'_>, rel_step: f64) -> Vec<Vec<Complex64>> {
    let scene = model.scene;
    let x = scene.coefficients().to_vec();
    let g = scene.gamma();
    let tau = scene.tau().max(scene.delta());
    let mut cols = Vec::with_capacity(2 + 2 * x.len());

    let ht = rel_step * tau;
    cols.push(central_difference(model.mean(ht, g, &x), model.mean(-ht, g, &x), ht));
    let hg = rel_step * g;
    cols.push(central_difference(model.mean(0.0, g + hg, &x), model.mean(0.0, g - hg, &x), hg));
    for imag in [false, true] {
        for p in 0..x.len() {
            let h = rel_step * x[p].norm().max(1.0);
            let bump = if imag { Complex64::new(0.0, h) } else { Complex64::new(h, 0.0) };
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[p] += bump;
            xm[p] -= bump;
            cols.push(central_difference(model.mean(0.0, g, &xp), model.mean(0.0, g, &xm), h));
        }
    }
    cols
}

fn rel_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = a.iter().map(|x| x.norm_sqr()).sum();
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        num.sqrt()
    }
}

/// Step-instability limit between the two finite-difference step sizes.
pub const FD_STEP_TOLERANCE: f64 = 5e-3;

/// Full `(2P + 2) x (2P + 2)` Fisher matrix of the sampled model by central
/// differences, ordered `[tau, gamma, a_1..a_P, b_1..b_P]`.
pub fn fim_oracle_fd(
    scene: &TargetScene,
    spec: &WaveformSpec,
    n0: f64,
    rel_step: f64,
) -> Result<DMatrix<f64>> {
    if !(1e-7..=1e-3).contains(&rel_step) {
        return Err(CrlbError::invalid("step", "relative step must lie in [1e-7, 1e-3]"));
    }
    if !(n0 > 0.0) {
        return Err(CrlbError::invalid("n0", "must be positive"));
    }
    scene.check_complete_sampling(spec.duration())?;
    let model = FrozenModel::new(scene, spec);
    let cols = jacobian(&model, rel_step);
    let coarse = jacobian(&model, rel_step * 2.0);
    for k in 0..2 {
        let d = rel_diff(&cols[k], &coarse[k]);
        if d > FD_STEP_TOLERANCE {
            return Err(CrlbError::StepInstability {
                rel_diff: d,
                limit: FD_STEP_TOLERANCE,
            });
        }
    }
    let sigma2 = n0 / scene.delta();
    let dim = cols.len();
    let mut fim = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in i..dim {
            let v: Complex64 = cols[i].iter().zip(&cols[j]).map(|(a, b)| a.conj() * b).sum();
            let f = 2.0 / sigma2 * v.re;
            fim[(i, j)] = f;
            fim[(j, i)] = f;
        }
    }
    Ok(fim)
}

/// Diagonal of the inverse FIM for `(tau, gamma)` via a Schur reduction of
/// the diagonally equilibrated matrix.
pub fn crlb_from_fim(fim: &DMatrix<f64>) -> Result<CrlbResult> {
    let dim = fim.nrows();
    if dim < 3 || fim.ncols() != dim {
        return Err(CrlbError::invalid("fim", "need a square matrix of size >= 3"));
    }
    let d: Vec<f64> = (0..dim).map(|i| fim[(i, i)].sqrt()).collect();
    if d.iter().any(|v| !(*v > 0.0)) {
        return Err(CrlbError::SingularBlock("FIM has a nonpositive diagonal".into()));
    }
    let g = DMatrix::from_fn(dim, dim, |i, j| fim[(i, j)] / (d[i] * d[j]));
    let nuis = g.view((2, 2), (dim - 2, dim - 2)).into_owned();
    let eig = nuis.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    let chol = nuis
        .cholesky()
        .ok_or_else(|| CrlbError::SingularBlock("equilibrated nuisance block is not positive definite".into()))?;
    let c1 = g.view((2, 0), (dim - 2, 1)).into_owned();
    let c2 = g.view((2, 1), (dim - 2, 1)).into_owned();
    let z1 = chol.solve(&c1);
    let z2 = chol.solve(&c2);
    let terms = SchurTerms {
        a11: (g[(0, 0)] - c1.dot(&z1)) * d[0] * d[0],
        a12: (g[(0, 1)] - 0.5 * (c1.dot(&z2) + c2.dot(&z1))) * d[0] * d[1],
        a22: (g[(1, 1)] - c2.dot(&z2)) * d[1] * d[1],
        condition,
    };
    crlb_from_terms(&terms, Provenance::FiniteDifference)
}
