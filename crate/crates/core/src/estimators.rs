//! Delay/stretch estimators built on the wideband ambiguity function (WBAF)
//! and the Monte Carlo harness that compares their MSE with the CRLBs.
//!
//! `W(tau, gamma) = sqrt(gamma) int s_r(t) conj(s_d(gamma (t - tau))) dt` is
//! evaluated in the reference's own time `u = gamma (t - tau)`, i.e.
//! `(1 / sqrt(gamma)) int_0^T s_r(tau + u / gamma) conj(s(u)) du`, with the
//! received samples reconstructed between grid points.

use std::f64::consts::PI;

use log::warn;
use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CrlbError, Result};
use crate::fisher;
use crate::quadrature::Quadrature;
use crate::scene::{self, NoiseModel, TargetScene};
use crate::waveform::WaveformSpec;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Windowed-sinc taps per output sample.
pub const SINC_TAPS: usize = 16;
/// Upsampling factor of the received signal before cubic interpolation.
pub const UPSAMPLE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    OracleMf,
    Wbaf,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::OracleMf => "oracle-mf",
            Method::Wbaf => "wbaf",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = CrlbError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle-mf" => Ok(Method::OracleMf),
            "wbaf" => Ok(Method::Wbaf),
            other => Err(CrlbError::invalid("method", format!("unknown method `{other}`"))),
        }
    }
}

/// Reconstruction of the received signal between samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interpolation {
    /// Piecewise linear between samples. Does not ring at the hard edges of
    /// a windowed echo, so the noiseless argmax stays at the truth.
    #[default]
    Linear,
    /// 16-tap Blackman-windowed sinc onto a 4x grid, then Catmull-Rom.
    WindowedSinc,
}

/// Received samples `y_n`, `n = 0..N`, with off-grid reconstruction.
#[derive(Debug, Clone)]
pub struct ReceivedSignal {
    delta: f64,
    /// Nodes of the reconstruction grid, spacing `delta / factor`.
    nodes: Vec<Complex64>,
    factor: usize,
    mode: Interpolation,
}

fn blackman_sinc(x: f64) -> f64 {
    let half = SINC_TAPS as f64 / 2.0;
    if x.abs() >= half {
        return 0.0;
    }
    let sinc = if x == 0.0 { 1.0 } else { (PI * x).sin() / (PI * x) };
    let w = 0.42 + 0.5 * (PI * x / half).cos() + 0.08 * (2.0 * PI * x / half).cos();
    sinc * w
}

fn upsample(samples: &[Complex64]) -> Vec<Complex64> {
    let n = samples.len();
    let half = (SINC_TAPS / 2) as i64;
    // Taps for each fractional phase k / UPSAMPLE, normalised to unit DC gain.
    let phases: Vec<Vec<f64>> = (0..UPSAMPLE)
        .map(|k| {
            let f = k as f64 / UPSAMPLE as f64;
            let taps: Vec<f64> = (-half + 1..=half).map(|m| blackman_sinc(f - m as f64)).collect();
            let sum: f64 = taps.iter().sum();
            taps.into_iter().map(|t| t / sum).collect()
        })
        .collect();
    let mut fine = vec![ZERO; n * UPSAMPLE];
    for i in 0..n {
        fine[i * UPSAMPLE] = samples[i];
        for (k, taps) in phases.iter().enumerate().skip(1) {
            let mut acc = ZERO;
            for (t, m) in taps.iter().zip(-half + 1..=half) {
                let idx = i as i64 + m;
                if idx >= 0 && (idx as usize) < n {
                    acc += samples[idx as usize] * *t;
                }
            }
            fine[i * UPSAMPLE + k] = acc;
        }
    }
    fine
}

impl ReceivedSignal {
    pub fn new(samples: &[Complex64], delta: f64) -> Result<Self> {
        Self::with_interpolation(samples, delta, Interpolation::default())
    }

    pub fn with_interpolation(samples: &[Complex64], delta: f64, mode: Interpolation) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(CrlbError::invalid("delta", "must be positive"));
        }
        let (nodes, factor) = match mode {
            Interpolation::Linear => (samples.to_vec(), 1),
            Interpolation::WindowedSinc => (upsample(samples), UPSAMPLE),
        };
        Ok(ReceivedSignal {
            delta,
            nodes,
            factor,
            mode,
        })
    }

    pub fn from_vector(y: &DVector<Complex64>, delta: f64) -> Result<Self> {
        Self::new(y.as_slice(), delta)
    }

    pub fn interpolation(&self) -> Interpolation {
        self.mode
    }

    /// `s_r(t)`; zero outside the observation window.
    #[inline]
    pub fn at(&self, t: f64) -> Complex64 {
        let x = t / self.delta * self.factor as f64;
        let i = x.floor();
        let f = x - i;
        let i = i as i64;
        let len = self.nodes.len() as i64;
        if i < -2 || i > len {
            return ZERO;
        }
        let get = |k: i64| {
            if k >= 0 && k < len {
                self.nodes[k as usize]
            } else {
                ZERO
            }
        };
        if f == 0.0 {
            return get(i);
        }
        match self.mode {
            Interpolation::Linear => get(i) * (1.0 - f) + get(i + 1) * f,
            Interpolation::WindowedSinc => {
                let (p0, p1, p2, p3) = (get(i - 1), get(i), get(i + 1), get(i + 2));
                let f2 = f * f;
                let f3 = f2 * f;
                (p1 * 2.0
                    + (p2 - p0) * f
                    + (p0 * 2.0 - p1 * 5.0 + p2 * 4.0 - p3) * f2
                    + (p1 * 3.0 - p0 - p2 * 3.0 + p3) * f3)
                    * 0.5
            }
        }
    }
}

/// Reference waveform sampled on a `u`-grid for one stretch value.
struct ReferenceGrid {
    step: f64,
    /// `conj(s(u_k)) * trapezoid weight * step`.
    weights: Vec<Complex64>,
}

impl ReferenceGrid {
    fn new(spec: &WaveformSpec, gamma: f64, delta: f64) -> Self {
        let t_len = spec.duration();
        // One node per received sample: u-step close to gamma * delta.
        let n = ((t_len / (gamma * delta)) - 1e-9).ceil().max(1.0) as usize;
        let step = t_len / n as f64;
        let weights = (0..=n)
            .map(|k| {
                let u = if k == n { t_len } else { k as f64 * step };
                let w = if k == 0 || k == n { 0.5 } else { 1.0 };
                spec.evaluate(u).conj() * (w * step)
            })
            .collect();
        ReferenceGrid { step, weights }
    }

    fn correlate(&self, r: &ReceivedSignal, tau: f64, gamma: f64) -> Complex64 {
        let dt = self.step / gamma;
        let mut acc = ZERO;
        for (k, w) in self.weights.iter().enumerate() {
            acc += r.at(tau + k as f64 * dt) * w;
        }
        acc / gamma.sqrt()
    }
}

/// Point-reference WBAF value at `(tau, gamma)`.
pub fn wbaf(received: &ReceivedSignal, spec: &WaveformSpec, tau: f64, gamma: f64) -> Result<Complex64> {
    if !(gamma > 0.0) {
        return Err(CrlbError::invalid("gamma", "must be positive"));
    }
    Ok(ReferenceGrid::new(spec, gamma, received.delta).correlate(received, tau, gamma))
}

/// WBAF with the composite reference `sum_p x_p s(gamma (t - tau - (p-1) delta))`.
pub fn oracle_wbaf(
    received: &ReceivedSignal,
    spec: &WaveformSpec,
    x: &[Complex64],
    tau: f64,
    gamma: f64,
) -> Result<Complex64> {
    if !(gamma > 0.0) {
        return Err(CrlbError::invalid("gamma", "must be positive"));
    }
    let grid = ReferenceGrid::new(spec, gamma, received.delta);
    Ok(oracle_value(&grid, received, x, tau, gamma))
}

fn oracle_value(
    grid: &ReferenceGrid,
    r: &ReceivedSignal,
    x: &[Complex64],
    tau: f64,
    gamma: f64,
) -> Complex64 {
    x.iter()
        .enumerate()
        .map(|(p, xp)| xp.conj() * grid.correlate(r, tau + p as f64 * r.delta, gamma))
        .sum()
}

/// Search box and grid resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    /// Half-width of the delay box in samples.
    pub tau_half_width_samples: f64,
    /// Delay grid step in samples.
    pub tau_step_samples: f64,
    /// Relative half-width of the stretch box.
    pub gamma_rel_half_width: f64,
    pub gamma_points: usize,
    /// Refinement stops when the delay bracket falls below `delta * this`.
    pub tau_tol_samples: f64,
    pub gamma_tol: f64,
    /// Cap on objective evaluations during refinement.
    pub max_evaluations: usize,
    pub interpolation: Interpolation,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            tau_half_width_samples: 20.0,
            tau_step_samples: 0.25,
            gamma_rel_half_width: 0.03,
            gamma_points: 201,
            tau_tol_samples: 0.01,
            gamma_tol: 1e-6,
            max_evaluations: 20_000,
            interpolation: Interpolation::Linear,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |f: &str, r: &str| Err(CrlbError::invalid(f, r));
        if !(self.tau_half_width_samples > 0.0) {
            return bad("tau_half_width_samples", "must be positive");
        }
        if !(self.tau_step_samples > 0.0) || self.tau_step_samples > self.tau_half_width_samples {
            return bad("tau_step_samples", "must be positive and at most the half-width");
        }
        if !(self.gamma_rel_half_width > 0.0 && self.gamma_rel_half_width < 1.0) {
            return bad("gamma_rel_half_width", "must lie in (0, 1)");
        }
        if self.gamma_points < 3 {
            return bad("gamma_points", "need at least 3");
        }
        if !(self.tau_tol_samples > 0.0) || !(self.gamma_tol > 0.0) {
            return bad("tolerance", "refinement tolerances must be positive");
        }
        if self.max_evaluations == 0 {
            return bad("max_evaluations", "must be positive");
        }
        Ok(())
    }
}

/// Coarse-grid surface `|W|` with strictly increasing axes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WbafSurface {
    pub tau: Vec<f64>,
    pub gamma: Vec<f64>,
    /// Row-major, `values[i_gamma * tau.len() + i_tau]`.
    pub values: Vec<f64>,
    pub argmax: (usize, usize),
}

impl WbafSurface {
    pub fn value(&self, i_tau: usize, i_gamma: usize) -> f64 {
        self.values[i_gamma * self.tau.len() + i_tau]
    }

    pub fn peak(&self) -> f64 {
        self.value(self.argmax.0, self.argmax.1)
    }

    fn from_values(tau: Vec<f64>, gamma: Vec<f64>, values: Vec<f64>) -> Self {
        let mut best = (0usize, f64::MIN);
        for (k, &v) in values.iter().enumerate() {
            if v > best.1 {
                best = (k, v);
            }
        }
        let nt = tau.len();
        WbafSurface {
            argmax: (best.0 % nt, best.0 / nt),
            tau,
            gamma,
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateResult {
    pub tau: f64,
    pub gamma: f64,
    pub method: Method,
    pub coarse_peak: f64,
    pub peak: f64,
    pub evaluations: usize,
    pub boundary_hit: bool,
}

/// Precomputed point-reference correlations over an extended delay grid, so
/// both estimators can share one pass per echo.
struct PointGrid {
    taus: Vec<f64>,
    gammas: Vec<f64>,
    /// `[i_gamma][i_tau]`.
    values: Vec<Vec<Complex64>>,
}

fn axis(center: f64, half: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| center - half + 2.0 * half * k as f64 / (n - 1) as f64)
        .collect()
}

fn point_grid(
    r: &ReceivedSignal,
    spec: &WaveformSpec,
    tau_center: f64,
    gamma_center: f64,
    cfg: &SearchConfig,
    extra_samples: usize,
) -> PointGrid {
    let delta = r.delta;
    let step = cfg.tau_step_samples * delta;
    let half_steps = (cfg.tau_half_width_samples / cfg.tau_step_samples).round() as i64;
    let per_sample = (1.0 / cfg.tau_step_samples).round() as i64;
    let extra = extra_samples as i64 * per_sample;
    let taus: Vec<f64> = (-half_steps..=half_steps + extra)
        .map(|k| tau_center + k as f64 * step)
        .collect();
    let gammas = axis(gamma_center, gamma_center * cfg.gamma_rel_half_width, cfg.gamma_points);
    let values = gammas
        .iter()
        .map(|&g| {
            let grid = ReferenceGrid::new(spec, g, delta);
            taus.iter().map(|&t| grid.correlate(r, t, g)).collect()
        })
        .collect();
    PointGrid { taus, gammas, values }
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section maximisation on `[lo, hi]`. Returns the best point seen,
/// endpoints included.
fn golden_max<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64, usize) {
    let (mut a, mut b) = (lo, hi);
    let mut best = (a, f(a));
    let vb = f(b);
    if vb > best.1 {
        best = (b, vb);
    }
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let mut evals = 4;
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        evals += 1;
    }
    for (x, v) in [(c, fc), (d, fd)] {
        if v > best.1 {
            best = (x, v);
        }
    }
    (best.0, best.1, evals)
}

/// Golden section on a bracket of half-width `half` around `center`, moving
/// the bracket while the maximum sits on its edge. Stays inside `bounds`.
fn sliding_max<F: FnMut(f64) -> f64>(
    mut f: F,
    center: f64,
    half: f64,
    bounds: (f64, f64),
    tol: f64,
    budget: &mut usize,
) -> (f64, f64) {
    let mut center = center;
    let mut best = (center, f64::NEG_INFINITY);
    for _ in 0..64 {
        let lo = (center - half).max(bounds.0);
        let hi = (center + half).min(bounds.1);
        let (x, v, n) = golden_max(&mut f, lo, hi, tol);
        *budget = budget.saturating_sub(n);
        if v <= best.1 {
            break;
        }
        best = (x, v);
        let on_edge = (x - lo < tol && lo > bounds.0) || (hi - x < tol && hi < bounds.1);
        if !on_edge || *budget == 0 {
            break;
        }
        center = x;
    }
    best
}

/// Profile search: golden section over delay of the stretch-maximised
/// objective. Each inner bracket starts from the stretch found at the
/// previous delay, so the search follows a tilted delay/stretch ridge.
/// Falls back to the start point when nothing better is found.
fn refine<F: Fn(f64, f64) -> f64>(
    objective: F,
    start: (f64, f64),
    start_value: f64,
    bounds: ((f64, f64), (f64, f64)),
    steps: (f64, f64),
    tol: (f64, f64),
    max_evals: usize,
) -> ((f64, f64), f64, usize) {
    let mut budget = max_evals;
    let last_gamma = std::cell::Cell::new(start.1);
    let profile = |t: f64, budget: &mut usize| -> (f64, f64) {
        let r = sliding_max(|g| objective(t, g), last_gamma.get(), 2.0 * steps.1, bounds.1, tol.1, budget);
        last_gamma.set(r.0);
        r
    };
    let budget_cell = std::cell::Cell::new(budget);
    let mut outer_budget = budget;
    let (tau, _) = sliding_max(
        |t| {
            let mut b = budget_cell.get();
            let (_, v) = profile(t, &mut b);
            budget_cell.set(b);
            if b == 0 {
                f64::NEG_INFINITY
            } else {
                v
            }
        },
        start.0,
        2.0 * steps.0,
        bounds.0,
        tol.0,
        &mut outer_budget,
    );
    budget = budget_cell.get();
    last_gamma.set(start.1);
    let (gamma, value) = profile(tau, &mut budget);
    let used = max_evals - budget;
    if value > start_value {
        ((tau, gamma), value, used)
    } else {
        (start, start_value, used)
    }
}

/// Prior information handed to the estimators.
#[derive(Debug, Clone)]
pub struct SearchPrior {
    pub tau_center: f64,
    pub gamma_center: f64,
    /// True coefficients; used only by the oracle method.
    pub coefficients: Vec<Complex64>,
}

/// Run both (or one) estimators on one echo, sharing the coarse pass.
pub fn estimate_all(
    methods: &[Method],
    received: &ReceivedSignal,
    spec: &WaveformSpec,
    prior: &SearchPrior,
    cfg: &SearchConfig,
) -> Result<Vec<EstimateResult>> {
    cfg.validate()?;
    if !(prior.gamma_center > 0.0) {
        return Err(CrlbError::invalid("gamma_center", "must be positive"));
    }
    let p = prior.coefficients.len().max(1);
    let needs_oracle = methods.contains(&Method::OracleMf);
    let extra = if needs_oracle { p - 1 } else { 0 };
    let grid = point_grid(received, spec, prior.tau_center, prior.gamma_center, cfg, extra);
    let n_tau = grid.taus.len() - extra * (1.0 / cfg.tau_step_samples).round() as usize;
    let shift = (1.0 / cfg.tau_step_samples).round() as usize;
    let taus: Vec<f64> = grid.taus[..n_tau].to_vec();
    let tau_bounds = (taus[0], taus[n_tau - 1]);
    let gamma_bounds = (grid.gammas[0], grid.gammas[grid.gammas.len() - 1]);
    let steps = (
        cfg.tau_step_samples * received.delta,
        grid.gammas[1] - grid.gammas[0],
    );
    let tol = (cfg.tau_tol_samples * received.delta, cfg.gamma_tol);

    methods
        .iter()
        .map(|&method| {
            let mut values = Vec::with_capacity(n_tau * grid.gammas.len());
            for row in &grid.values {
                for i in 0..n_tau {
                    let v = match method {
                        Method::Wbaf => row[i],
                        Method::OracleMf => prior
                            .coefficients
                            .iter()
                            .enumerate()
                            .map(|(q, xq)| xq.conj() * row[i + q * shift])
                            .sum(),
                    };
                    values.push(v.norm());
                }
            }
            let surface = WbafSurface::from_values(taus.clone(), grid.gammas.clone(), values);
            let start = (surface.tau[surface.argmax.0], surface.gamma[surface.argmax.1]);
            let coarse_peak = surface.peak();
            let objective = |t: f64, g: f64| -> f64 {
                let refg = ReferenceGrid::new(spec, g, received.delta);
                match method {
                    Method::Wbaf => refg.correlate(received, t, g).norm(),
                    Method::OracleMf => {
                        oracle_value(&refg, received, &prior.coefficients, t, g).norm()
                    }
                }
            };
            let ((tau, gamma), peak, evaluations) = refine(
                objective,
                start,
                coarse_peak,
                (tau_bounds, gamma_bounds),
                steps,
                tol,
                cfg.max_evaluations,
            );
            let eps_t = 1e-9 * received.delta;
            let boundary_hit = (tau - tau_bounds.0).abs() < eps_t
                || (tau - tau_bounds.1).abs() < eps_t
                || gamma <= gamma_bounds.0
                || gamma >= gamma_bounds.1;
            if boundary_hit {
                warn!(
                    "{} estimate ({tau:e}, {gamma}) lies on the search-box edge",
                    method.name()
                );
            }
            Ok(EstimateResult {
                tau,
                gamma,
                method,
                coarse_peak,
                peak,
                evaluations,
                boundary_hit,
            })
        })
        .collect()
}

pub fn estimate(
    method: Method,
    received: &ReceivedSignal,
    spec: &WaveformSpec,
    prior: &SearchPrior,
    cfg: &SearchConfig,
) -> Result<EstimateResult> {
    Ok(estimate_all(&[method], received, spec, prior, cfg)?.remove(0))
}

/// Coarse `|W|` surface for one method without refinement.
pub fn surface(
    method: Method,
    received: &ReceivedSignal,
    spec: &WaveformSpec,
    prior: &SearchPrior,
    cfg: &SearchConfig,
) -> Result<WbafSurface> {
    cfg.validate()?;
    let p = prior.coefficients.len().max(1);
    let extra = if method == Method::OracleMf { p - 1 } else { 0 };
    let grid = point_grid(received, spec, prior.tau_center, prior.gamma_center, cfg, extra);
    let shift = (1.0 / cfg.tau_step_samples).round() as usize;
    let n_tau = grid.taus.len() - extra * shift;
    let mut values = Vec::with_capacity(n_tau * grid.gammas.len());
    for row in &grid.values {
        for i in 0..n_tau {
            let v: Complex64 = match method {
                Method::Wbaf => row[i],
                Method::OracleMf => prior
                    .coefficients
                    .iter()
                    .enumerate()
                    .map(|(q, xq)| xq.conj() * row[i + q * shift])
                    .sum(),
            };
            values.push(v.norm());
        }
    }
    Ok(WbafSurface::from_values(grid.taus[..n_tau].to_vec(), grid.gammas, values))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloRow {
    pub method: Method,
    pub snr_db: f64,
    pub trials: usize,
    pub mse_tau: f64,
    pub mse_gamma: f64,
    pub crlb_tau: f64,
    pub crlb_gamma: f64,
    pub boundary_hits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloReport {
    pub seed: u64,
    pub rows: Vec<MonteCarloRow>,
}

/// Per SNR, draw `trials` echoes on independent streams
/// (`stream = snr_index * trials + trial`), run every method on each echo and
/// average squared errors against the truth (`tau` is the first scatterer).
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo(
    scene: &TargetScene,
    spec: &WaveformSpec,
    snr_db: &[f64],
    trials: usize,
    seed: u64,
    methods: &[Method],
    cfg: &SearchConfig,
    quad: &Quadrature,
) -> Result<MonteCarloReport> {
    if trials == 0 {
        return Err(CrlbError::invalid("trials", "must be at least 1"));
    }
    if methods.is_empty() {
        return Err(CrlbError::invalid("methods", "need at least one estimator"));
    }
    let gram = scene::gram_matrix(scene, spec, quad)?;
    let clean = scene::noiseless_echo(scene, spec)?;
    let prior = SearchPrior {
        tau_center: scene.tau(),
        gamma_center: scene.gamma(),
        coefficients: scene.coefficients().to_vec(),
    };
    let mut rows = Vec::new();
    for (si, &snr) in snr_db.iter().enumerate() {
        let n0 = scene::n0_for_snr(scene, &gram, snr)?;
        let bound = fisher::scene_crlb(scene, spec, n0, quad)?;
        let noise = NoiseModel::new(n0, seed)?;
        let sigma2 = noise.sample_variance(scene.delta());
        let per_trial: Vec<Vec<EstimateResult>> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = scene::stream_rng(seed, (si * trials + t) as u64);
                let w = scene::complex_noise(clean.len(), sigma2, &mut rng);
                let y: Vec<Complex64> = clean.iter().zip(&w).map(|(a, b)| a + b).collect();
                let r = ReceivedSignal::with_interpolation(&y, scene.delta(), cfg.interpolation)?;
                estimate_all(methods, &r, spec, &prior, cfg)
            })
            .collect::<Result<_>>()?;
        for (mi, &method) in methods.iter().enumerate() {
            let (mut st, mut sg, mut hits) = (0.0, 0.0, 0usize);
            for est in &per_trial {
                let e = &est[mi];
                st += (e.tau - scene.tau()).powi(2);
                sg += (e.gamma - scene.gamma()).powi(2);
                hits += e.boundary_hit as usize;
            }
            rows.push(MonteCarloRow {
                method,
                snr_db: snr,
                trials,
                mse_tau: st / trials as f64,
                mse_gamma: sg / trials as f64,
                crlb_tau: bound.crlb_tau,
                crlb_gamma: bound.crlb_gamma,
                boundary_hits: hits,
            });
        }
    }
    Ok(MonteCarloReport { seed, rows })
}
