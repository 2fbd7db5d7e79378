//! Transmit envelopes, their derivatives, and the moment integrals built on them.
//!
//! Every envelope is time-limited to `[0, T]`. Derivatives are those of the
//! interior analytic expression; the jumps of the rectangular window at `0`
//! and `T` are not represented. Analytic families (chirp, tone, gaussian
//! pulse) are all of the form `A * exp(q(u))` (or its real part) with `q` a
//! complex quadratic in the normalised time `u = t / T`, so the m-th
//! derivative is `A * T^-m * P_m(u) * exp(q(u))` with
//! `P_{m+1} = P_m' + q' P_m`.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{CrlbError, Result};
use crate::quadrature::Quadrature;

/// Series truncation order the default derivative budget is sized for.
pub const DEFAULT_K_MAX: usize = 8;
/// Default maximum derivative order, `2 * K_max + 2`.
pub const DEFAULT_MAX_ORDER: usize = 2 * DEFAULT_K_MAX + 2;

/// Relative slack on the support test so that sample instants landing on
/// `T` up to rounding are treated as inside.
const SUPPORT_EPS: f64 = 1e-12;

/// Fraction of each edge of a sampled envelope that is tapered.
const SAMPLED_TAPER_FRACTION: f64 = 0.02;
/// Oversampling factor of the precomputed spectral-derivative tables.
const SAMPLED_UPSAMPLE: usize = 8;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Uniformly sampled complex envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledEnvelope {
    pub values: Vec<Complex64>,
    pub step: f64,
}

impl SampledEnvelope {
    /// Read a headerless or headed CSV with columns `t, re, im`.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path.as_ref())?;
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 3 {
                return Err(CrlbError::invalid(
                    "sampled.csv",
                    format!("line {}: expected 3 columns (t, re, im), found {}", line + 1, rec.len()),
                ));
            }
            let parsed: std::result::Result<Vec<f64>, _> =
                rec.iter().map(|f| f.parse::<f64>()).collect();
            match parsed {
                Ok(v) => {
                    times.push(v[0]);
                    values.push(Complex64::new(v[1], v[2]));
                }
                // Allow a single header line.
                Err(_) if line == 0 => continue,
                Err(e) => {
                    return Err(CrlbError::invalid(
                        "sampled.csv",
                        format!("line {}: {}", line + 1, e),
                    ))
                }
            }
        }
        if times.len() < 2 {
            return Err(CrlbError::invalid("sampled.csv", "fewer than two samples"));
        }
        let step = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
        for w in times.windows(2) {
            if ((w[1] - w[0]) - step).abs() > 1e-6 * step.abs() {
                return Err(CrlbError::invalid("sampled.csv", "time column is not uniform"));
            }
        }
        Ok(SampledEnvelope { values, step })
    }
}

/// Envelope family and its shape parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum WaveformFamily {
    /// `cos(2 pi a t^2)`, chirp rate `a` in Hz/s.
    Chirp { rate: f64 },
    /// `exp(j 2 pi f_c t)`.
    Tone { carrier: f64 },
    /// `exp(-(t - T/2)^2 / (2 w^2)) * exp(j 2 pi f_c t)`.
    GaussianPulse { width: f64, carrier: f64 },
    Sampled(SampledEnvelope),
}

#[derive(Debug)]
enum Kernel {
    /// `exp(c0 + c1 v + c2 v^2)`, `v = u - center`, with derivative
    /// polynomials in `v`.
    QuadExp {
        c: [Complex64; 3],
        center: f64,
        polys: Vec<Vec<Complex64>>,
        real_part: bool,
    },
    /// Spectral derivative tables on an oversampled grid, orders `0..=max+1`.
    Spectral { tables: Vec<Vec<Complex64>>, fine_step: f64 },
}

/// A time-limited complex envelope with derivative access.
#[derive(Debug, Clone)]
pub struct WaveformSpec {
    family: WaveformFamily,
    amplitude: f64,
    duration: f64,
    max_order: usize,
    kernel: Arc<Kernel>,
}

impl PartialEq for WaveformSpec {
    fn eq(&self, other: &Self) -> bool {
        self.family == other.family
            && self.amplitude == other.amplitude
            && self.duration == other.duration
            && self.max_order == other.max_order
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(CrlbError::invalid(field, format!("must be positive and finite, got {v}")))
    }
}

impl WaveformSpec {
    pub fn new(family: WaveformFamily, amplitude: f64, duration: f64) -> Result<Self> {
        Self::with_max_order(family, amplitude, duration, DEFAULT_MAX_ORDER)
    }

    pub fn with_max_order(
        family: WaveformFamily,
        amplitude: f64,
        duration: f64,
        max_order: usize,
    ) -> Result<Self> {
        positive("amplitude", amplitude)?;
        let duration = match &family {
            WaveformFamily::Sampled(s) => {
                positive("sampled.step", s.step)?;
                if s.values.len() < 8 {
                    return Err(CrlbError::invalid(
                        "sampled.values",
                        format!("need at least 8 samples, got {}", s.values.len()),
                    ));
                }
                (s.values.len() - 1) as f64 * s.step
            }
            _ => {
                positive("duration", duration)?;
                duration
            }
        };
        let kernel = match &family {
            WaveformFamily::Chirp { rate } => {
                if !rate.is_finite() {
                    return Err(CrlbError::invalid("rate", "must be finite"));
                }
                let beta = 2.0 * PI * rate * duration * duration;
                quad_exp([ZERO, ZERO, Complex64::new(0.0, beta)], 0.0, true, max_order)
            }
            WaveformFamily::Tone { carrier } => {
                if !carrier.is_finite() {
                    return Err(CrlbError::invalid("carrier", "must be finite"));
                }
                let w = 2.0 * PI * carrier * duration;
                quad_exp([ZERO, Complex64::new(0.0, w), ZERO], 0.0, false, max_order)
            }
            WaveformFamily::GaussianPulse { width, carrier } => {
                positive("width", *width)?;
                if !carrier.is_finite() {
                    return Err(CrlbError::invalid("carrier", "must be finite"));
                }
                let wn = width / duration;
                let g = 1.0 / (2.0 * wn * wn);
                let w = 2.0 * PI * carrier * duration;
                quad_exp(
                    [
                        Complex64::new(0.0, w / 2.0),
                        Complex64::new(0.0, w),
                        Complex64::new(-g, 0.0),
                    ],
                    0.5,
                    carrier == &0.0,
                    max_order,
                )
            }
            WaveformFamily::Sampled(s) => spectral(s, max_order),
        };
        Ok(WaveformSpec {
            family,
            amplitude,
            duration,
            max_order,
            kernel: Arc::new(kernel),
        })
    }

    pub fn chirp(rate: f64, duration: f64) -> Result<Self> {
        Self::new(WaveformFamily::Chirp { rate }, 1.0, duration)
    }

    pub fn tone(carrier: f64, duration: f64) -> Result<Self> {
        Self::new(WaveformFamily::Tone { carrier }, 1.0, duration)
    }

    pub fn gaussian_pulse(width: f64, carrier: f64, duration: f64) -> Result<Self> {
        Self::new(WaveformFamily::GaussianPulse { width, carrier }, 1.0, duration)
    }

    pub fn sampled(values: Vec<Complex64>, step: f64) -> Result<Self> {
        Self::new(WaveformFamily::Sampled(SampledEnvelope { values, step }), 1.0, 0.0)
    }

    /// Same family and duration with a different amplitude.
    pub fn scaled(&self, amplitude: f64) -> Result<Self> {
        positive("amplitude", amplitude)?;
        Ok(WaveformSpec {
            amplitude,
            ..self.clone()
        })
    }

    pub fn family(&self) -> &WaveformFamily {
        &self.family
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    /// True when the envelope is real-valued everywhere.
    pub fn is_real(&self) -> bool {
        match &self.family {
            WaveformFamily::Chirp { .. } => true,
            WaveformFamily::Tone { carrier } => *carrier == 0.0,
            WaveformFamily::GaussianPulse { carrier, .. } => *carrier == 0.0,
            WaveformFamily::Sampled(s) => s.values.iter().all(|v| v.im == 0.0),
        }
    }

    #[inline]
    pub fn in_support(&self, t: f64) -> bool {
        let eps = SUPPORT_EPS * self.duration;
        t >= -eps && t <= self.duration + eps
    }

    /// `s(t)`, zero outside `[0, T]`.
    pub fn evaluate(&self, t: f64) -> Complex64 {
        if self.in_support(t) {
            self.interior(t, 0)
        } else {
            ZERO
        }
    }

    /// m-th derivative of the interior expression, zero outside `[0, T]`.
    pub fn derivative(&self, t: f64, order: usize) -> Result<Complex64> {
        self.check_order(order)?;
        Ok(if self.in_support(t) {
            self.interior(t, order)
        } else {
            ZERO
        })
    }

    /// Analytic continuation of the interior expression, ignoring the window.
    pub fn interior_derivative(&self, t: f64, order: usize) -> Result<Complex64> {
        self.check_order(order)?;
        Ok(self.interior(t, order))
    }

    /// Fill `out[m]` with the m-th derivative at `t` for `m < out.len()`.
    /// Zero outside the support. Caller guarantees `out.len() <= max_order + 1`.
    pub(crate) fn derivatives_into(&self, t: f64, out: &mut [Complex64]) {
        if !self.in_support(t) {
            out.iter_mut().for_each(|o| *o = ZERO);
            return;
        }
        match &*self.kernel {
            Kernel::QuadExp {
                c,
                center,
                polys,
                real_part,
            } => {
                let u = t / self.duration - center;
                let e = (c[0] + c[1] * u + c[2] * u * u).exp();
                let inv_t = 1.0 / self.duration;
                let mut scale = self.amplitude;
                for (m, o) in out.iter_mut().enumerate() {
                    let v = horner(&polys[m], u) * e * scale;
                    *o = if *real_part { Complex64::new(v.re, 0.0) } else { v };
                    scale *= inv_t;
                }
            }
            Kernel::Spectral { .. } => {
                for (m, o) in out.iter_mut().enumerate() {
                    *o = self.interior(t, m);
                }
            }
        }
    }

    pub(crate) fn check_order(&self, order: usize) -> Result<()> {
        if order > self.max_order {
            Err(CrlbError::OrderOverflow {
                requested: order,
                max: self.max_order,
            })
        } else {
            Ok(())
        }
    }

    pub(crate) fn interior(&self, t: f64, order: usize) -> Complex64 {
        match &*self.kernel {
            Kernel::QuadExp {
                c,
                center,
                polys,
                real_part,
            } => {
                if order == 0 {
                    if let WaveformFamily::Chirp { rate } = self.family {
                        return Complex64::new(self.amplitude * (2.0 * PI * rate * t * t).cos(), 0.0);
                    }
                }
                let u = t / self.duration - center;
                let v = horner(&polys[order], u)
                    * (c[0] + c[1] * u + c[2] * u * u).exp()
                    * (self.amplitude * self.duration.powi(-(order as i32)));
                if *real_part {
                    Complex64::new(v.re, 0.0)
                } else {
                    v
                }
            }
            Kernel::Spectral { tables, fine_step } => {
                // Cubic Hermite between fine-grid nodes using the exact
                // spectral derivative of the next order as slope.
                let x = t / fine_step;
                let len = tables[order].len();
                let period = len as f64;
                let xw = x.rem_euclid(period);
                let i0 = (xw.floor() as usize).min(len - 1);
                let i1 = (i0 + 1) % len;
                let s = xw - i0 as f64;
                let (y0, y1) = (tables[order][i0], tables[order][i1]);
                let (d0, d1) = (
                    tables[order + 1][i0] * *fine_step,
                    tables[order + 1][i1] * *fine_step,
                );
                let s2 = s * s;
                let s3 = s2 * s;
                let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
                let h10 = s3 - 2.0 * s2 + s;
                let h01 = -2.0 * s3 + 3.0 * s2;
                let h11 = s3 - s2;
                (y0 * h00 + d0 * h10 + y1 * h01 + d1 * h11) * self.amplitude
            }
        }
    }
}

fn horner(coeffs: &[Complex64], u: f64) -> Complex64 {
    coeffs.iter().rev().fold(ZERO, |acc, &c| acc * u + c)
}

fn quad_exp(c: [Complex64; 3], center: f64, real_part: bool, max_order: usize) -> Kernel {
    // q'(v) = c1 + 2 c2 v
    let dq = [c[1], c[2] * 2.0];
    let mut polys: Vec<Vec<Complex64>> = Vec::with_capacity(max_order + 2);
    polys.push(vec![Complex64::new(1.0, 0.0)]);
    for m in 0..=max_order {
        let p = &polys[m];
        let mut next = vec![ZERO; p.len() + 1];
        for (j, &a) in p.iter().enumerate() {
            if j > 0 {
                next[j - 1] += a * j as f64;
            }
            next[j] += a * dq[0];
            next[j + 1] += a * dq[1];
        }
        while next.len() > 1 && next[next.len() - 1] == ZERO {
            next.pop();
        }
        polys.push(next);
    }
    Kernel::QuadExp {
        c,
        center,
        polys,
        real_part,
    }
}

fn spectral(s: &SampledEnvelope, max_order: usize) -> Kernel {
    let n = s.values.len();
    let ramp = ((SAMPLED_TAPER_FRACTION * n as f64).ceil() as usize).max(1);
    let mut x: Vec<Complex64> = s
        .values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let edge = i.min(n - 1 - i);
            let w = if edge < ramp {
                0.5 * (1.0 - (PI * edge as f64 / ramp as f64).cos())
            } else {
                1.0
            };
            v * w
        })
        .collect();

    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(n).process(&mut x);

    let m_fine = n * SAMPLED_UPSAMPLE;
    let inverse = planner.plan_fft_inverse(m_fine);
    let period = n as f64 * s.step;
    let mut tables = Vec::with_capacity(max_order + 2);
    for order in 0..=(max_order + 1) {
        let mut spec = vec![ZERO; m_fine];
        for (k, &xk) in x.iter().enumerate() {
            // Signed frequency index; the Nyquist bin of an even grid is dropped.
            let kk = if k <= n / 2 { k as isize } else { k as isize - n as isize };
            if n % 2 == 0 && k == n / 2 {
                continue;
            }
            let omega = 2.0 * PI * kk as f64 / period;
            let factor = Complex64::new(0.0, omega).powu(order as u32);
            let dst = if kk >= 0 { kk as usize } else { (m_fine as isize + kk) as usize };
            spec[dst] = xk * factor / n as f64;
        }
        inverse.process(&mut spec);
        tables.push(spec);
    }
    Kernel::Spectral {
        tables,
        fine_step: s.step / SAMPLED_UPSAMPLE as f64,
    }
}

/// Moment tables `M_i^(k)` and `M~_i^(k)`, `i in 0..=2`, `k in 0..=k_max`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaveformMoments {
    pub k_max: usize,
    /// `plain[i][k] = int t^i |s^(k)(t)|^2 dt`.
    pub plain: [Vec<f64>; 3],
    /// `cross[i][k] = Im int t^i conj(s^(k)(t)) s^(k+1)(t) dt`.
    pub cross: [Vec<f64>; 3],
}

impl WaveformMoments {
    #[inline]
    pub fn m(&self, i: usize, k: usize) -> f64 {
        self.plain[i][k]
    }

    #[inline]
    pub fn mt(&self, i: usize, k: usize) -> f64 {
        self.cross[i][k]
    }

    /// Moments of the same envelope expressed with time measured in units of `unit`.
    pub fn rescaled(&self, unit: f64) -> WaveformMoments {
        let mut out = self.clone();
        for i in 0..3 {
            for k in 0..=self.k_max {
                out.plain[i][k] *= unit.powi(2 * k as i32 - i as i32 - 1);
                out.cross[i][k] *= unit.powi(2 * k as i32 - i as i32);
            }
        }
        out
    }
}

/// Compute the moment tables by quadrature over `[0, T]`.
pub fn moments(spec: &WaveformSpec, k_max: usize, quad: &Quadrature) -> Result<WaveformMoments> {
    if k_max < 1 {
        return Err(CrlbError::invalid("k_max", "must be at least 1"));
    }
    spec.check_order(k_max + 1)?;
    let mut plain = [vec![0.0; k_max + 1], vec![0.0; k_max + 1], vec![0.0; k_max + 1]];
    let mut cross = plain.clone();
    for k in 0..=k_max {
        let vals = quad.integrate(
            |t| {
                let mut d = [ZERO; 2];
                spec.derivatives_into_range(t, k, &mut d);
                let p = d[0].norm_sqr();
                let x = d[0].conj() * d[1];
                let t2 = t * t;
                [
                    Complex64::new(p, 0.0),
                    Complex64::new(p * t, 0.0),
                    Complex64::new(p * t2, 0.0),
                    x,
                    x * t,
                    x * t2,
                ]
            },
            0.0,
            spec.duration(),
        )?;
        for i in 0..3 {
            plain[i][k] = vals[i].re;
            cross[i][k] = vals[3 + i].im;
        }
    }
    Ok(WaveformMoments {
        k_max,
        plain,
        cross,
    })
}

impl WaveformSpec {
    /// `out[j]` = derivative of order `first + j`.
    pub(crate) fn derivatives_into_range(&self, t: f64, first: usize, out: &mut [Complex64]) {
        if first == 0 {
            self.derivatives_into(t, out);
            return;
        }
        if !self.in_support(t) {
            out.iter_mut().for_each(|o| *o = ZERO);
            return;
        }
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.interior(t, first + j);
        }
    }
}

/// Energy, RMS bandwidth and the two effective durations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectiveParams {
    pub energy: f64,
    /// `sqrt(M_0^(1) / M_0^(0))`, in rad/s.
    pub bandwidth: f64,
    /// `sqrt(M_2^(1) / M_0^(1))`.
    pub duration: f64,
    /// `sqrt(M_2^(0) / M_0^(0))`.
    pub duration_t2: f64,
    pub time_bandwidth: f64,
}

impl EffectiveParams {
    pub fn from_moments(m: &WaveformMoments, support: f64) -> Result<Self> {
        let e = m.m(0, 0);
        let d1 = m.m(0, 1);
        if !(e > 0.0) || !e.is_finite() {
            return Err(CrlbError::DegenerateWaveform(format!("energy M_0^(0) = {e:e}")));
        }
        // Scale-free test: B * T below 1e-7 means the interior is constant.
        if !(d1 > 0.0) || d1 * support * support <= 1e-14 * e {
            return Err(CrlbError::DegenerateWaveform(format!(
                "derivative energy M_0^(1) = {d1:e} is negligible"
            )));
        }
        let bandwidth = (d1 / e).sqrt();
        let duration = (m.m(2, 1) / d1).sqrt();
        Ok(EffectiveParams {
            energy: e,
            bandwidth,
            duration,
            duration_t2: (m.m(2, 0) / e).sqrt(),
            time_bandwidth: bandwidth * duration,
        })
    }
}

pub fn effective_params(spec: &WaveformSpec, quad: &Quadrature) -> Result<EffectiveParams> {
    let m = moments(spec, 1, quad)?;
    EffectiveParams::from_moments(&m, spec.duration())
}

/// The integration-by-parts identities relating cross integrals of
/// derivatives to the moment tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Identity {
    RePlain,
    ReT,
    ReT2,
    ImPlain,
    ImT,
    ImT2,
}

impl Identity {
    pub const ALL: [Identity; 6] = [
        Identity::RePlain,
        Identity::ReT,
        Identity::ReT2,
        Identity::ImPlain,
        Identity::ImT,
        Identity::ImT2,
    ];

    pub fn weight_power(self) -> usize {
        match self {
            Identity::RePlain | Identity::ImPlain => 0,
            Identity::ReT | Identity::ImT => 1,
            Identity::ReT2 | Identity::ImT2 => 2,
        }
    }

    fn is_real_part(self) -> bool {
        matches!(self, Identity::RePlain | Identity::ReT | Identity::ReT2)
    }

    pub fn name(self) -> &'static str {
        match self {
            Identity::RePlain => "re-plain",
            Identity::ReT => "re-t",
            Identity::ReT2 => "re-t2",
            Identity::ImPlain => "im-plain",
            Identity::ImT => "im-t",
            Identity::ImT2 => "im-t2",
        }
    }
}

impl std::str::FromStr for Identity {
    type Err = CrlbError;
    fn from_str(s: &str) -> Result<Self> {
        Identity::ALL
            .iter()
            .copied()
            .find(|i| i.name() == s)
            .ok_or_else(|| CrlbError::invalid("identity", format!("unknown identity `{s}`")))
    }
}

#[inline]
fn sign(n: usize) -> f64 {
    if n % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Closed form of `Re/Im int t^i conj(s^(p)) s^(q) dt` in terms of the moments.
///
/// The `t^2` identities are stated for `p = 0`; for `p > 0` the derivative is
/// moved onto the other factor first:
/// `I_2(p, q) = (-1)^p I_2(0, p+q) - 2 sum_l (-1)^l I_1(p-1-l, q+l)`.
pub fn identity_rhs(id: Identity, p: usize, q: usize, m: &WaveformMoments) -> f64 {
    let n = p + q;
    let k = n / 2;
    let even = n % 2 == 0;
    match id {
        Identity::RePlain => {
            if even {
                sign(p + k) * m.m(0, k)
            } else {
                0.0
            }
        }
        Identity::ImPlain => {
            if even {
                0.0
            } else {
                sign(p + k) * m.mt(0, k)
            }
        }
        Identity::ReT => {
            if even {
                sign(p + k) * m.m(1, k)
            } else {
                sign(p + k) * (p as f64 - k as f64 - 0.5) * m.m(0, k)
            }
        }
        Identity::ImT => {
            if even {
                if k == 0 {
                    0.0
                } else {
                    sign(p + k) * (k as f64 - p as f64) * m.mt(0, k - 1)
                }
            } else {
                sign(p + k) * m.mt(1, k)
            }
        }
        Identity::ReT2 | Identity::ImT2 => {
            let base = t2_base(id, n, m);
            let lower = if id == Identity::ReT2 {
                Identity::ReT
            } else {
                Identity::ImT
            };
            let mut acc = sign(p) * base;
            for l in 0..p {
                acc -= 2.0 * sign(l) * identity_rhs(lower, p - 1 - l, q + l, m);
            }
            acc
        }
    }
}

fn t2_base(id: Identity, q: usize, m: &WaveformMoments) -> f64 {
    let k = q / 2;
    let kf = k as f64;
    if id == Identity::ReT2 {
        if q % 2 == 0 {
            let tail = if k == 0 { 0.0 } else { kf * kf * m.m(0, k - 1) };
            sign(k) * m.m(2, k) - sign(k) * tail
        } else {
            sign(k + 1) * (2.0 * kf + 1.0) * m.m(1, k)
        }
    } else if q % 2 == 0 {
        if k == 0 {
            0.0
        } else {
            sign(k) * 2.0 * kf * m.mt(1, k - 1)
        }
    } else {
        let tail = if k == 0 { 0.0 } else { (kf * kf + kf) * m.mt(0, k - 1) };
        sign(k) * m.mt(2, k) - sign(k) * tail
    }
}

/// Direct-quadrature versus closed-form evaluation of one identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// `|lhs - rhs|` over the larger of `|lhs|`, `|rhs|` and the L1 norm of the integrand.
    pub rel_error: f64,
}

pub fn check_identity(
    spec: &WaveformSpec,
    id: Identity,
    p: usize,
    q: usize,
    quad: &Quadrature,
) -> Result<IdentityCheck> {
    spec.check_order(p.max(q))?;
    let k_needed = ((p + q) / 2 + 1).max(1);
    spec.check_order(k_needed + 1)?;
    let mom = moments(spec, k_needed, quad)?;
    let power = id.weight_power() as i32;
    let vals = quad.integrate(
        |t| {
            let sp = spec.derivative(t, p).unwrap_or(ZERO);
            let sq = spec.derivative(t, q).unwrap_or(ZERO);
            let v = sp.conj() * sq * t.powi(power);
            [v, Complex64::new(v.norm(), 0.0)]
        },
        0.0,
        spec.duration(),
    )?;
    let lhs = if id.is_real_part() { vals[0].re } else { vals[0].im };
    let rhs = identity_rhs(id, p, q, &mom);
    let scale = lhs.abs().max(rhs.abs()).max(vals[1].re);
    let rel_error = if scale > 0.0 {
        (lhs - rhs).abs() / scale
    } else {
        0.0
    };
    Ok(IdentityCheck {
        lhs,
        rhs,
        rel_error,
    })
}
