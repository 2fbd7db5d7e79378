//! Extended-target geometry, the measurement matrix, echo synthesis and SNR.

use log::info;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use std::io::Write;
use std::path::Path;

use crate::error::{CrlbError, Result};
use crate::quadrature::Quadrature;
use crate::waveform::WaveformSpec;

pub const DEFAULT_PROPAGATION_SPEED: f64 = 3e8;
/// Guard band applied to the minimum sample count.
pub const SAMPLE_GUARD: f64 = 0.05;

/// P equally spaced point scatterers observed at sampling interval `delta`.
///
/// The first-scatterer delay is stored as an integer number of samples, so
/// `tau / delta` is always integral.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetScene {
    tau_samples: i64,
    gamma: f64,
    delta: f64,
    coefficients: Vec<Complex64>,
    n_samples: usize,
    speed: f64,
}

impl TargetScene {
    /// Build a scene and pick the sample count for `waveform_duration`.
    ///
    /// `tau` is rounded to the nearest multiple of `delta`; `n_samples`,
    /// when `None`, is the smallest count that captures every echo plus a
    /// 5% guard band.
    pub fn new(
        tau: f64,
        gamma: f64,
        delta: f64,
        coefficients: Vec<Complex64>,
        waveform_duration: f64,
        n_samples: Option<usize>,
    ) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(CrlbError::invalid("gamma", format!("must be positive, got {gamma}")));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(CrlbError::invalid("delta", format!("must be positive, got {delta}")));
        }
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(CrlbError::invalid("tau", format!("must be nonnegative, got {tau}")));
        }
        if coefficients.is_empty() {
            return Err(CrlbError::invalid("x", "need at least one scatterer"));
        }
        if !(waveform_duration > 0.0) {
            return Err(CrlbError::invalid("duration", "waveform duration must be positive"));
        }
        let ratio = tau / delta;
        let tau_samples = ratio.round() as i64;
        if (ratio - tau_samples as f64).abs() > 1e-9 {
            info!(
                "tau = {tau:e} s is not a multiple of delta; rounded to {:e} s",
                tau_samples as f64 * delta
            );
        }
        let p = coefficients.len();
        let last = (tau_samples + p as i64 - 1) as f64;
        let needed = last + waveform_duration / (gamma * delta);
        let n_min = (needed - 1e-9).ceil() as usize + 1;
        let n_samples = match n_samples {
            Some(n) => n,
            None => ((n_min as f64) * (1.0 + SAMPLE_GUARD)).ceil() as usize,
        };
        let scene = TargetScene {
            tau_samples,
            gamma,
            delta,
            coefficients,
            n_samples,
            speed: DEFAULT_PROPAGATION_SPEED,
        };
        scene.check_complete_sampling(waveform_duration)?;
        Ok(scene)
    }

    pub fn with_speed(mut self, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(CrlbError::invalid("c", "propagation speed must be positive"));
        }
        self.speed = c;
        Ok(self)
    }

    /// Same geometry with a different coefficient vector of the same length.
    pub fn with_coefficients(&self, x: Vec<Complex64>) -> Result<Self> {
        if x.len() != self.coefficients.len() {
            return Err(CrlbError::invalid("x", "coefficient count must not change"));
        }
        Ok(TargetScene {
            coefficients: x,
            ..self.clone()
        })
    }

    /// Every echo lies inside the sampling window:
    /// `gamma ((N-1) delta - tau_p) >= T` for every scatterer.
    pub fn check_complete_sampling(&self, duration: f64) -> Result<()> {
        let last = self.tau_samples + self.num_scatterers() as i64 - 1;
        let span = self.gamma * ((self.n_samples as i64 - 1 - last) as f64 * self.delta);
        if span < duration * (1.0 - 1e-12) {
            return Err(CrlbError::SupportViolation(format!(
                "last echo needs gamma((N-1)delta - tau_P) >= T = {duration:e}, have {span:e} with N = {}",
                self.n_samples
            )));
        }
        Ok(())
    }

    pub fn tau(&self) -> f64 {
        self.tau_samples as f64 * self.delta
    }

    pub fn tau_samples(&self) -> i64 {
        self.tau_samples
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    pub fn num_scatterers(&self) -> usize {
        self.coefficients.len()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    /// `tau_p = tau + (p - 1) delta`.
    pub fn scatterer_delays(&self) -> Vec<f64> {
        (0..self.num_scatterers())
            .map(|p| (self.tau_samples + p as i64) as f64 * self.delta)
            .collect()
    }

    /// `L = c (tau_P - tau_1) / 2`.
    pub fn target_size(&self) -> f64 {
        0.5 * self.speed * (self.num_scatterers() - 1) as f64 * self.delta
    }

    pub fn coefficient_vector(&self) -> DVector<Complex64> {
        DVector::from_column_slice(&self.coefficients)
    }

    pub fn has_real_coefficients(&self) -> bool {
        self.coefficients.iter().all(|x| x.im == 0.0)
    }
}

/// Noise power spectral density and generator seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub n0: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(n0: f64, seed: u64) -> Result<Self> {
        if !(n0 > 0.0 && n0.is_finite()) {
            return Err(CrlbError::invalid("n0", format!("must be positive, got {n0}")));
        }
        Ok(NoiseModel { n0, seed })
    }

    /// Per-sample complex variance `sigma^2 = N_0 / delta`.
    pub fn sample_variance(&self, delta: f64) -> f64 {
        self.n0 / delta
    }
}

/// `Phi[n][p] = s(gamma (n delta - tau_p))`, `n = 0..N`.
pub fn measurement_matrix(scene: &TargetScene, spec: &WaveformSpec) -> Result<DMatrix<Complex64>> {
    scene.check_complete_sampling(spec.duration())?;
    let n = scene.n_samples();
    let p = scene.num_scatterers();
    let mut phi = DMatrix::zeros(n, p);
    for j in 0..p {
        let start = scene.tau_samples() + j as i64;
        for i in 0..n {
            // Integer sample offset keeps the arguments exact on the grid.
            let arg = scene.gamma() * ((i as i64 - start) as f64 * scene.delta());
            phi[(i, j)] = spec.evaluate(arg);
        }
    }
    Ok(phi)
}

/// Hermitian Gram matrix `Lambda_ij = int conj(s(t)) s(t + gamma (tau_i - tau_j)) dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub lambda: DMatrix<Complex64>,
}

/// Lag integral `int conj(s(t)) s(t + shift) dt` over the overlap of the supports.
pub(crate) fn autocorrelation(spec: &WaveformSpec, shift: f64, quad: &Quadrature) -> Result<Complex64> {
    let t_len = spec.duration();
    let a = 0f64.max(-shift);
    let b = t_len.min(t_len - shift);
    if b <= a {
        return Ok(Complex64::new(0.0, 0.0));
    }
    quad.integrate_one(|t| spec.evaluate(t).conj() * spec.evaluate(t + shift), a, b)
}

pub fn gram_matrix(scene: &TargetScene, spec: &WaveformSpec, quad: &Quadrature) -> Result<GramMatrix> {
    let p = scene.num_scatterers();
    let shifts: Vec<f64> = (0..p)
        .map(|d| scene.gamma() * d as f64 * scene.delta())
        .collect();
    // Lambda depends only on i - j; lag -d is the conjugate of lag d.
    let lags: Vec<Complex64> = shifts
        .par_iter()
        .map(|&s| autocorrelation(spec, s, quad))
        .collect::<Result<_>>()?;
    let mut lambda = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            lambda[(i, j)] = if i >= j {
                lags[i - j]
            } else {
                lags[j - i].conj()
            };
        }
    }
    Ok(GramMatrix { lambda })
}

/// `x^H Lambda x`, the (unnormalised) echo energy times gamma.
pub fn echo_energy(scene: &TargetScene, gram: &GramMatrix) -> f64 {
    let x = scene.coefficient_vector();
    (x.adjoint() * &gram.lambda * &x)[(0, 0)].re
}

fn snr_linear(scene: &TargetScene, gram: &GramMatrix, n0: f64) -> Result<f64> {
    let e = echo_energy(scene, gram);
    if !(e > 0.0) {
        return Err(CrlbError::DegenerateWaveform(format!(
            "echo energy x^H Lambda x = {e:e} is not positive"
        )));
    }
    Ok(e / (scene.gamma() * n0))
}

/// SNR in dB, `10 log10(x^H Lambda x / (gamma N_0))`.
pub fn snr_db(scene: &TargetScene, gram: &GramMatrix, n0: f64) -> Result<f64> {
    Ok(10.0 * snr_linear(scene, gram, n0)?.log10())
}

/// Noise density giving the requested SNR.
pub fn n0_for_snr(scene: &TargetScene, gram: &GramMatrix, snr_db: f64) -> Result<f64> {
    let unit = snr_linear(scene, gram, 1.0)?;
    Ok(unit / 10f64.powf(snr_db / 10.0))
}

/// Noiseless echo `Phi x`.
pub fn noiseless_echo(scene: &TargetScene, spec: &WaveformSpec) -> Result<DVector<Complex64>> {
    Ok(measurement_matrix(scene, spec)? * scene.coefficient_vector())
}

/// Seeded generator for one independent stream (one Monte Carlo trial).
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Circular complex white noise of variance `sigma2`.
pub fn complex_noise(n: usize, sigma2: f64, rng: &mut ChaCha20Rng) -> Vec<Complex64> {
    let sd = (0.5 * sigma2).sqrt();
    (0..n)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re * sd, im * sd)
        })
        .collect()
}

/// `y = Phi x + w` using stream `stream` of the noise seed.
pub fn synthesize_echo(
    scene: &TargetScene,
    spec: &WaveformSpec,
    noise: &NoiseModel,
    stream: u64,
) -> Result<DVector<Complex64>> {
    let mut y = noiseless_echo(scene, spec)?;
    let mut rng = stream_rng(noise.seed, stream);
    let w = complex_noise(y.len(), noise.sample_variance(scene.delta()), &mut rng);
    for (yi, wi) in y.iter_mut().zip(w) {
        *yi += wi;
    }
    Ok(y)
}

/// Write `n, re, im` rows.
pub fn write_echo_csv(path: impl AsRef<Path>, y: &DVector<Complex64>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "n,re,im")?;
    for (n, v) in y.iter().enumerate() {
        writeln!(f, "{n},{:e},{:e}", v.re, v.im)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chirp() -> WaveformSpec {
        WaveformSpec::chirp(2.56e9, 5e-5).unwrap()
    }

    fn ones(p: usize) -> Vec<Complex64> {
        vec![Complex64::new(1.0, 0.0); p]
    }

    #[test]
    fn delays_are_equally_spaced() {
        let s = TargetScene::new(2e-4, 1.0 / 1.06, 6.25e-8, ones(4), 5e-5, None).unwrap();
        let d = s.scatterer_delays();
        let expect = [2e-4, 2.000625e-4, 2.00125e-4, 2.001875e-4];
        for (a, b) in d.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12 * b);
        }
        for w in d.windows(2) {
            assert!((w[1] - w[0] - 6.25e-8).abs() < 1e-12 * 2e-4);
        }
        let one = TargetScene::new(2e-4, 1.0, 6.25e-8, ones(1), 5e-5, None).unwrap();
        assert_eq!(one.scatterer_delays(), vec![one.tau()]);
    }

    #[test]
    fn tau_is_rounded_to_the_grid() {
        let s = TargetScene::new(1.03e-6, 1.0, 1e-7, ones(1), 1e-5, None).unwrap();
        assert_eq!(s.tau_samples(), 10);
        assert!((s.tau() - 1e-6).abs() < 1e-20);
    }

    #[test]
    fn sample_count_has_guard_band() {
        let s = TargetScene::new(0.0, 1.0, 1e-6, ones(1), 1e-4, None).unwrap();
        // 101 samples are the minimum.
        assert_eq!(s.n_samples(), 107);
        assert!(TargetScene::new(0.0, 1.0, 1e-6, ones(1), 1e-4, Some(100)).is_err());
        assert!(TargetScene::new(0.0, 1.0, 1e-6, ones(1), 1e-4, Some(101)).is_ok());
    }

    #[test]
    fn invalid_scenes() {
        assert!(TargetScene::new(0.0, 0.0, 1e-6, ones(1), 1e-4, None).is_err());
        assert!(TargetScene::new(0.0, 1.0, -1e-6, ones(1), 1e-4, None).is_err());
        assert!(TargetScene::new(-1.0, 1.0, 1e-6, ones(1), 1e-4, None).is_err());
        assert!(TargetScene::new(0.0, 1.0, 1e-6, vec![], 1e-4, None).is_err());
    }

    #[test]
    fn target_size_is_derived() {
        let s = TargetScene::new(2e-4, 1.0, 6.25e-8, ones(16), 5e-5, None).unwrap();
        assert!((s.target_size() - 0.5 * 3e8 * 15.0 * 6.25e-8).abs() < 1e-9);
    }

    #[test]
    fn measurement_matrix_columns_are_shifted_copies() {
        let spec = chirp();
        let s = TargetScene::new(0.0, 1.0, 6.25e-8, ones(3), 5e-5, None).unwrap();
        let phi = measurement_matrix(&s, &spec).unwrap();
        for i in 0..s.n_samples() {
            assert_eq!(phi[(i, 0)], spec.evaluate(i as f64 * 6.25e-8));
        }
        for j in 1..3 {
            for i in 1..s.n_samples() {
                assert_eq!(phi[(i, j)], phi[(i - 1, j - 1)]);
            }
            assert_eq!(phi[(0, j)], Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn gram_single_scatterer_is_energy() {
        let spec = chirp();
        let q = Quadrature::default();
        let s = TargetScene::new(2e-4, 1.0 / 1.06, 6.25e-8, ones(1), 5e-5, None).unwrap();
        let g = gram_matrix(&s, &spec, &q).unwrap();
        let m = crate::waveform::moments(&spec, 1, &q).unwrap();
        assert!((g.lambda[(0, 0)].re - m.m(0, 0)).abs() < 1e-10 * m.m(0, 0));
    }

    #[test]
    fn gram_is_hermitian() {
        let spec = WaveformSpec::gaussian_pulse(5e-6, 2e5, 5e-5).unwrap();
        let q = Quadrature::default();
        let s = TargetScene::new(2e-4, 0.98, 1e-7, ones(5), 5e-5, None).unwrap();
        let g = gram_matrix(&s, &spec, &q).unwrap();
        assert_eq!(g.lambda, g.lambda.adjoint());
    }

    #[test]
    fn snr_round_trip_and_single_scatterer_value() {
        let spec = chirp();
        let q = Quadrature::default();
        let s = TargetScene::new(2e-4, 1.0 / 1.06, 6.25e-8, ones(1), 5e-5, None).unwrap();
        let g = gram_matrix(&s, &spec, &q).unwrap();
        let n0 = 3.7e-9;
        let snr = snr_db(&s, &g, n0).unwrap();
        let expect = 10.0 * (g.lambda[(0, 0)].re / (s.gamma() * n0)).log10();
        assert!((snr - expect).abs() < 1e-12);
        let back = n0_for_snr(&s, &g, snr).unwrap();
        assert!((back / n0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_limit_and_determinism() {
        let spec = chirp();
        let s = TargetScene::new(1e-5, 1.0, 6.25e-8, ones(2), 5e-5, None).unwrap();
        let clean = noiseless_echo(&s, &spec).unwrap();
        let tiny = NoiseModel::new(1e-300, 1).unwrap();
        let y = synthesize_echo(&s, &spec, &tiny, 0).unwrap();
        assert!((y - &clean).norm() < 1e-100);
        let nm = NoiseModel::new(1e-9, 42).unwrap();
        let a = synthesize_echo(&s, &spec, &nm, 3).unwrap();
        let b = synthesize_echo(&s, &spec, &nm, 3).unwrap();
        assert_eq!(a, b);
        let c = synthesize_echo(&s, &spec, &nm, 4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn noise_variance_matches_n0_over_delta() {
        let delta = 1e-7;
        let nm = NoiseModel::new(2e-9, 7).unwrap();
        let sigma2 = nm.sample_variance(delta);
        let mut rng = stream_rng(7, 0);
        let w = complex_noise(100_000, sigma2, &mut rng);
        let var = w.iter().map(|v| v.norm_sqr()).sum::<f64>() / w.len() as f64;
        assert!((var / sigma2 - 1.0).abs() < 0.02, "{var} vs {sigma2}");
    }
}
