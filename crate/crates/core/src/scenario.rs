//! Scenario files, the built-in figure catalog and the CSV runner.
//!
//! A scenario file is TOML with one `[[scenario]]` table per scenario:
//!
//! ```toml
//! output_dir = "out"
//!
//! [[scenario]]
//! name = "p4-demo"
//! seed = 7
//! waveform = { family = "chirp", rate = 2.56e9, duration = 5e-5 }
//! scene = { tau = 2e-4, gamma = 0.9433962264150944, delta = 6.25e-8, p = 4 }
//! noise = { snr_start_db = 10, snr_stop_db = 40, snr_step_db = 2 }
//! sweep = { kind = "series-order", orders = [1, 2, 3, 4] }
//! ```
//!
//! Unknown keys are rejected everywhere.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CrlbError, Result};
use crate::estimators::{self, Method, SearchConfig};
use crate::fisher::{self, CrlbResult};
use crate::quadrature::Quadrature;
use crate::scene::{self, TargetScene};
use crate::series;
use crate::waveform::{self, EffectiveParams, SampledEnvelope, WaveformFamily, WaveformSpec};

/// Stretch used by every built-in scenario.
pub const REFERENCE_GAMMA: f64 = 1.0 / 1.06;

pub const CRLB_CSV: &str = "crlb.csv";
pub const SERIES_CSV: &str = "series.csv";
pub const MONTE_CARLO_CSV: &str = "monte_carlo.csv";
pub const MANIFEST: &str = "manifest.json";
pub const CONFIG_COPY: &str = "config.toml";

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn default_seed() -> u64 {
    1
}
fn default_trials() -> usize {
    100
}
fn default_methods() -> Vec<Method> {
    vec![Method::OracleMf, Method::Wbaf]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyName {
    Chirp,
    Tone,
    GaussianPulse,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveformConfig {
    pub family: FamilyName,
    #[serde(default = "one")]
    pub amplitude: f64,
    /// Support length `T`; taken from the samples for `sampled`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub carrier: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    /// CSV `t, re, im`; relative to the scenario file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl WaveformConfig {
    pub fn chirp(rate: f64, duration: f64) -> Self {
        WaveformConfig {
            family: FamilyName::Chirp,
            amplitude: 1.0,
            duration: Some(duration),
            rate: Some(rate),
            carrier: None,
            width: None,
            path: None,
        }
    }

    fn build(&self, at: &str) -> Result<WaveformSpec> {
        let need = |v: Option<f64>, key: &str| {
            v.ok_or_else(|| CrlbError::config(format!("{at}.{key}"), "required for this family"))
        };
        let forbid = |v: bool, key: &str| {
            if v {
                Err(CrlbError::config(format!("{at}.{key}"), "not used by this family"))
            } else {
                Ok(())
            }
        };
        let family = match self.family {
            FamilyName::Chirp => {
                forbid(self.carrier.is_some(), "carrier")?;
                forbid(self.width.is_some(), "width")?;
                forbid(self.path.is_some(), "path")?;
                WaveformFamily::Chirp {
                    rate: need(self.rate, "rate")?,
                }
            }
            FamilyName::Tone => {
                forbid(self.rate.is_some(), "rate")?;
                forbid(self.width.is_some(), "width")?;
                forbid(self.path.is_some(), "path")?;
                WaveformFamily::Tone {
                    carrier: need(self.carrier, "carrier")?,
                }
            }
            FamilyName::GaussianPulse => {
                forbid(self.rate.is_some(), "rate")?;
                forbid(self.path.is_some(), "path")?;
                WaveformFamily::GaussianPulse {
                    width: need(self.width, "width")?,
                    carrier: self.carrier.unwrap_or(0.0),
                }
            }
            FamilyName::Sampled => {
                forbid(self.rate.is_some(), "rate")?;
                forbid(self.carrier.is_some(), "carrier")?;
                forbid(self.width.is_some(), "width")?;
                forbid(self.duration.is_some(), "duration")?;
                let path = self
                    .path
                    .as_ref()
                    .ok_or_else(|| CrlbError::config(format!("{at}.path"), "required for sampled"))?;
                WaveformFamily::Sampled(
                    SampledEnvelope::from_csv(path).map_err(|e| CrlbError::config(format!("{at}.path"), e.to_string()))?,
                )
            }
        };
        let duration = match self.family {
            FamilyName::Sampled => 0.0,
            _ => need(self.duration, "duration")?,
        };
        WaveformSpec::new(family, self.amplitude, duration).map_err(|e| rebase(e, at))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub tau: f64,
    pub gamma: f64,
    pub delta: f64,
    /// Number of scatterers `P`.
    #[serde(default = "one_usize")]
    pub p: usize,
    /// Coefficients as `[re, im]` pairs; all ones when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
}

impl SceneConfig {
    pub fn reference(p: usize) -> Self {
        SceneConfig {
            tau: 2e-4,
            gamma: REFERENCE_GAMMA,
            delta: 6.25e-8,
            p,
            x: None,
            n_samples: None,
        }
    }

    fn build(&self, p: usize, duration: f64, at: &str) -> Result<TargetScene> {
        if p == 0 {
            return Err(CrlbError::config(format!("{at}.p"), "need at least one scatterer"));
        }
        let x: Vec<Complex64> = match &self.x {
            Some(v) => {
                if v.len() != p {
                    return Err(CrlbError::config(
                        format!("{at}.x"),
                        format!("has {} entries, P = {p}", v.len()),
                    ));
                }
                v.iter().map(|c| Complex64::new(c[0], c[1])).collect()
            }
            None => vec![Complex64::new(1.0, 0.0); p],
        };
        TargetScene::new(self.tau, self.gamma, self.delta, x, duration, self.n_samples)
            .map_err(|e| rebase(e, at))
    }
}

/// Noise levels: an explicit SNR list, an SNR range, or explicit `N0` values.
/// Empty means 10 to 40 dB in 2 dB steps.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseAxis {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_start_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_stop_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_step_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseLevels {
    SnrDb(Vec<f64>),
    N0(Vec<f64>),
}

pub const DEFAULT_SNR_START_DB: f64 = 10.0;
pub const DEFAULT_SNR_STOP_DB: f64 = 40.0;
pub const DEFAULT_SNR_STEP_DB: f64 = 2.0;

impl NoiseAxis {
    pub fn snr_list(values: &[f64]) -> Self {
        NoiseAxis {
            snr_db: Some(values.to_vec()),
            ..Default::default()
        }
    }

    pub fn n0_list(values: &[f64]) -> Self {
        NoiseAxis {
            n0: Some(values.to_vec()),
            ..Default::default()
        }
    }

    pub fn resolve(&self, at: &str) -> Result<NoiseLevels> {
        let range = self.snr_start_db.is_some() || self.snr_stop_db.is_some() || self.snr_step_db.is_some();
        let kinds = self.snr_db.is_some() as u8 + self.n0.is_some() as u8 + range as u8;
        if kinds > 1 {
            return Err(CrlbError::config(at, "give only one of snr_db, the snr range, or n0"));
        }
        if let Some(v) = &self.n0 {
            if v.is_empty() || v.iter().any(|n| !(*n > 0.0 && n.is_finite())) {
                return Err(CrlbError::config(format!("{at}.n0"), "need positive finite values"));
            }
            return Ok(NoiseLevels::N0(v.clone()));
        }
        if let Some(v) = &self.snr_db {
            if v.is_empty() || v.iter().any(|s| !s.is_finite()) {
                return Err(CrlbError::config(format!("{at}.snr_db"), "need finite values"));
            }
            return Ok(NoiseLevels::SnrDb(v.clone()));
        }
        let start = self.snr_start_db.unwrap_or(DEFAULT_SNR_START_DB);
        let stop = self.snr_stop_db.unwrap_or(DEFAULT_SNR_STOP_DB);
        let step = self.snr_step_db.unwrap_or(DEFAULT_SNR_STEP_DB);
        if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
            return Err(CrlbError::config(at, "need snr_start_db <= snr_stop_db and snr_step_db > 0"));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        Ok(NoiseLevels::SnrDb((0..=n).map(|i| start + i as f64 * step).collect()))
    }
}

/// Parameter swept within one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Sweep {
    /// Chirp rate `a` in Hz/s, `points` values evenly spaced.
    ChirpRate { start: f64, stop: f64, points: usize },
    /// Chirp duration `T` with `a T^2` held at `product`.
    Duration { product: f64, start: f64, stop: f64, points: usize },
    /// Number of scatterers.
    Scatterers { values: Vec<usize> },
    /// Waveform amplitude.
    Amplitude { values: Vec<f64> },
    /// Series truncation order `K` against the integral bound.
    SeriesOrder {
        orders: Vec<usize>,
        #[serde(default = "yes")]
        exact_f33: bool,
    },
}

impl Sweep {
    pub fn name(&self) -> &'static str {
        match self {
            Sweep::ChirpRate { .. } => "chirp-rate",
            Sweep::Duration { .. } => "duration",
            Sweep::Scatterers { .. } => "scatterers",
            Sweep::Amplitude { .. } => "amplitude",
            Sweep::SeriesOrder { .. } => "series-order",
        }
    }
}

fn linspace(start: f64, stop: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![start];
    }
    (0..points)
        .map(|i| start + (stop - start) * i as f64 / (points - 1) as f64)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// Defaults to the scenario SNR axis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<Vec<f64>>,
    #[serde(default)]
    pub search: SearchConfig,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        MonteCarloConfig {
            trials: default_trials(),
            methods: default_methods(),
            snr_db: None,
            search: SearchConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub waveform: WaveformConfig,
    pub scene: SceneConfig,
    #[serde(default)]
    pub noise: NoiseAxis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monte_carlo: Option<MonteCarloConfig>,
}

/// A whole scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(rename = "scenario")]
    pub scenarios: Vec<ScenarioConfig>,
}

/// Prefix the field path of a validation error with `at`.
fn rebase(e: CrlbError, at: &str) -> CrlbError {
    match e {
        CrlbError::InvalidParameter { field, reason } => CrlbError::config(format!("{at}.{field}"), reason),
        CrlbError::Config { path, reason } => CrlbError::config(format!("{at}.{path}"), reason),
        CrlbError::SupportViolation(r) => CrlbError::config(at, format!("assumption 1 violated: {r}")),
        other => other,
    }
}

/// One fully built evaluation point of a scenario.
#[derive(Debug, Clone)]
pub struct ScenarioPoint {
    pub sweep_value: f64,
    pub spec: WaveformSpec,
    pub scene: TargetScene,
}

impl ScenarioConfig {
    fn at(&self, index: usize) -> String {
        format!("scenario[{index}]")
    }

    /// Build every waveform and scene the scenario will touch, so that
    /// assumption violations surface before any computation.
    pub fn points(&self, index: usize) -> Result<Vec<ScenarioPoint>> {
        let at = self.at(index);
        let wat = format!("{at}.waveform");
        let sat = format!("{at}.scene");
        let base = self.waveform.build(&wat)?;
        let p0 = self.scene.p;
        let single = |spec: WaveformSpec, p: usize, v: f64| -> Result<ScenarioPoint> {
            let scene = self.scene.build(p, spec.duration(), &sat)?;
            Ok(ScenarioPoint {
                sweep_value: v,
                spec,
                scene,
            })
        };
        let sweep_at = format!("{at}.sweep");
        let check_range = |start: f64, stop: f64, points: usize| -> Result<()> {
            if !(start > 0.0) || !(stop >= start) || !stop.is_finite() {
                return Err(CrlbError::config(&sweep_at, "need 0 < start <= stop"));
            }
            if points == 0 {
                return Err(CrlbError::config(format!("{sweep_at}.points"), "need at least one point"));
            }
            Ok(())
        };
        let chirp_only = || -> Result<()> {
            if self.waveform.family != FamilyName::Chirp {
                return Err(CrlbError::config(&sweep_at, "this sweep needs a chirp waveform"));
            }
            Ok(())
        };
        match &self.sweep {
            None => Ok(vec![single(base, p0, f64::NAN)?]),
            Some(Sweep::SeriesOrder { orders, .. }) => {
                if orders.is_empty() {
                    return Err(CrlbError::config(format!("{sweep_at}.orders"), "need at least one order"));
                }
                let k_max = base.max_order().saturating_sub(1);
                if let Some(&k) = orders.iter().find(|&&k| series::required_moment_order(k) > base.max_order()) {
                    return Err(CrlbError::config(
                        format!("{sweep_at}.orders"),
                        format!("order {k} exceeds the derivative budget (at most {k_max})"),
                    ));
                }
                Ok(vec![single(base, p0, f64::NAN)?])
            }
            Some(Sweep::ChirpRate { start, stop, points }) => {
                chirp_only()?;
                check_range(*start, *stop, *points)?;
                let mut cfg = self.waveform.clone();
                linspace(*start, *stop, *points)
                    .into_iter()
                    .map(|a| {
                        cfg.rate = Some(a);
                        single(cfg.build(&wat)?, p0, a)
                    })
                    .collect()
            }
            Some(Sweep::Duration {
                product,
                start,
                stop,
                points,
            }) => {
                chirp_only()?;
                check_range(*start, *stop, *points)?;
                if !(*product > 0.0) {
                    return Err(CrlbError::config(format!("{sweep_at}.product"), "must be positive"));
                }
                let mut cfg = self.waveform.clone();
                linspace(*start, *stop, *points)
                    .into_iter()
                    .map(|t| {
                        cfg.duration = Some(t);
                        cfg.rate = Some(product / (t * t));
                        single(cfg.build(&wat)?, p0, t)
                    })
                    .collect()
            }
            Some(Sweep::Scatterers { values }) => {
                if values.is_empty() || values.contains(&0) {
                    return Err(CrlbError::config(format!("{sweep_at}.values"), "need positive counts"));
                }
                if self.scene.x.is_some() {
                    return Err(CrlbError::config(format!("{at}.scene.x"), "cannot be fixed while sweeping P"));
                }
                values
                    .iter()
                    .map(|&p| single(base.clone(), p, p as f64))
                    .collect()
            }
            Some(Sweep::Amplitude { values }) => {
                if values.is_empty() {
                    return Err(CrlbError::config(format!("{sweep_at}.values"), "need at least one value"));
                }
                values
                    .iter()
                    .map(|&a| single(base.scaled(a).map_err(|e| rebase(e, &sweep_at))?, p0, a))
                    .collect()
            }
        }
    }

    /// Check the whole scenario without running it.
    pub fn validate(&self, index: usize) -> Result<()> {
        let at = self.at(index);
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return Err(CrlbError::config(
                format!("{at}.name"),
                "must be non-empty and use only letters, digits, '-' and '_'",
            ));
        }
        self.noise.resolve(&format!("{at}.noise"))?;
        self.points(index)?;
        if let Some(mc) = &self.monte_carlo {
            let mat = format!("{at}.monte_carlo");
            if self.sweep.is_some() {
                return Err(CrlbError::config(&mat, "cannot be combined with a sweep"));
            }
            if mc.trials == 0 {
                return Err(CrlbError::config(format!("{mat}.trials"), "must be at least 1"));
            }
            if mc.methods.is_empty() {
                return Err(CrlbError::config(format!("{mat}.methods"), "need at least one method"));
            }
            let distinct: BTreeSet<&str> = mc.methods.iter().map(|m| m.name()).collect();
            if distinct.len() != mc.methods.len() {
                return Err(CrlbError::config(format!("{mat}.methods"), "duplicate method"));
            }
            if self.mc_snr(mc).is_none() {
                return Err(CrlbError::config(
                    format!("{mat}.snr_db"),
                    "required when the noise axis is given as n0",
                ));
            }
            mc.search.validate().map_err(|e| rebase(e, &format!("{mat}.search")))?;
        }
        Ok(())
    }

    fn mc_snr(&self, mc: &MonteCarloConfig) -> Option<Vec<f64>> {
        if let Some(v) = &mc.snr_db {
            return Some(v.clone());
        }
        match self.noise.resolve("noise").ok()? {
            NoiseLevels::SnrDb(v) => Some(v),
            NoiseLevels::N0(_) => None,
        }
    }

    /// Canonical TOML of this scenario alone, as a loadable file.
    pub fn canonical_toml(&self) -> Result<String> {
        let file = ConfigFile {
            output_dir: None,
            scenarios: vec![self.clone()],
        };
        toml::to_string(&file).map_err(|e| CrlbError::config("scenario", e.to_string()))
    }

    /// SHA-256 of [`canonical_toml`](Self::canonical_toml), hex encoded.
    pub fn config_hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.canonical_toml()?.as_bytes())))
    }
}

impl ConfigFile {
    /// Parse TOML, resolving relative waveform paths against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut file: ConfigFile =
            toml::from_str(text).map_err(|e| CrlbError::config(span_path(&e), e.message().to_string()))?;
        for s in &mut file.scenarios {
            if let Some(p) = &s.waveform.path {
                if p.is_relative() {
                    s.waveform.path = Some(base_dir.join(p));
                }
            }
        }
        Ok(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| CrlbError::Io(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }

    /// Load `arg` as a file, or as a built-in scenario name when no such
    /// file exists.
    pub fn load_or_builtin(arg: &str) -> Result<Self> {
        if Path::new(arg).exists() {
            return Self::load(arg);
        }
        match builtin(arg) {
            Some(s) => Ok(ConfigFile {
                output_dir: None,
                scenarios: vec![s],
            }),
            None => Err(CrlbError::config(
                "config",
                format!("`{arg}` is neither a readable file nor a built-in scenario"),
            )),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() {
            return Err(CrlbError::config("scenario", "file defines no scenarios"));
        }
        let mut seen = BTreeSet::new();
        for (i, s) in self.scenarios.iter().enumerate() {
            if !seen.insert(s.name.as_str()) {
                return Err(CrlbError::config(
                    format!("scenario[{i}].name"),
                    format!("duplicate scenario name `{}`", s.name),
                ));
            }
            s.validate(i)?;
        }
        Ok(())
    }
}

fn span_path(e: &toml::de::Error) -> String {
    match e.span() {
        Some(r) => format!("byte {}..{}", r.start, r.end),
        None => "config".into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrlbRow {
    pub scenario: String,
    pub sweep: String,
    pub sweep_value: f64,
    #[serde(rename = "P")]
    pub p: usize,
    pub snr_db: f64,
    pub n0: f64,
    pub energy: f64,
    pub bandwidth: f64,
    pub duration: f64,
    pub time_bandwidth: f64,
    pub crlb_tau: f64,
    pub crlb_gamma: f64,
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
    pub condition: f64,
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesRow {
    pub scenario: String,
    #[serde(rename = "P")]
    pub p: usize,
    pub snr_db: f64,
    pub n0: f64,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "crlb_tau_K")]
    pub crlb_tau_k: f64,
    #[serde(rename = "crlb_gamma_K")]
    pub crlb_gamma_k: f64,
    pub gap_tau: f64,
    pub gap_gamma: f64,
    pub bound_shape: f64,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloCsvRow {
    pub scenario: String,
    pub method: String,
    pub snr_db: f64,
    pub trials: usize,
    pub mse_tau: f64,
    pub mse_gamma: f64,
    pub crlb_tau: f64,
    pub crlb_gamma: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ScenarioTables {
    pub crlb: Vec<CrlbRow>,
    pub series: Vec<SeriesRow>,
    pub monte_carlo: Vec<MonteCarloCsvRow>,
}

/// `(snr_db, n0)` pairs for one point.
fn noise_pairs(levels: &NoiseLevels, point: &ScenarioPoint, quad: &Quadrature) -> Result<Vec<(f64, f64)>> {
    let gram = scene::gram_matrix(&point.scene, &point.spec, quad)?;
    match levels {
        NoiseLevels::SnrDb(v) => v
            .iter()
            .map(|&s| Ok((s, scene::n0_for_snr(&point.scene, &gram, s)?)))
            .collect(),
        NoiseLevels::N0(v) => v
            .iter()
            .map(|&n| Ok((scene::snr_db(&point.scene, &gram, n)?, n)))
            .collect(),
    }
}

/// Compute every table of one scenario in memory.
pub fn run_scenario(cfg: &ScenarioConfig, quad: &Quadrature) -> Result<ScenarioTables> {
    cfg.validate(0)?;
    let levels = cfg.noise.resolve("noise")?;
    let sweep_name = cfg.sweep.as_ref().map(|s| s.name()).unwrap_or("none");
    let mut tables = ScenarioTables::default();
    for point in cfg.points(0)? {
        info!("{}: {} = {}", cfg.name, sweep_name, point.sweep_value);
        let params = waveform::effective_params(&point.spec, quad)?;
        let pairs = noise_pairs(&levels, &point, quad)?;
        // The bound is exactly linear in N0; evaluate once at unit noise.
        let unit = fisher::scene_crlb(&point.scene, &point.spec, 1.0, quad)?;
        for &(snr, n0) in &pairs {
            tables
                .crlb
                .push(crlb_row(cfg, sweep_name, &point, &params, snr, n0, &unit.at_noise_level(1.0, n0)));
        }
        if let Some(Sweep::SeriesOrder { orders, exact_f33 }) = &cfg.sweep {
            let decay = series::truncation_decay(&point.scene, &point.spec, 1.0, orders, *exact_f33, quad)?;
            for &(snr, n0) in &pairs {
                for row in &decay.rows {
                    tables.series.push(SeriesRow {
                        scenario: cfg.name.clone(),
                        p: point.scene.num_scatterers(),
                        snr_db: snr,
                        n0,
                        k: row.order,
                        crlb_tau_k: row.crlb_tau * n0,
                        crlb_gamma_k: row.crlb_gamma * n0,
                        gap_tau: row.gap_tau,
                        gap_gamma: row.gap_gamma,
                        bound_shape: row.bound_shape,
                        status: row.failure.clone().unwrap_or_else(|| "ok".into()),
                    });
                }
            }
        }
        if let Some(mc) = &cfg.monte_carlo {
            let snrs = cfg.mc_snr(mc).expect("validated");
            let report = estimators::monte_carlo(
                &point.scene,
                &point.spec,
                &snrs,
                mc.trials,
                cfg.seed,
                &mc.methods,
                &mc.search,
                quad,
            )?;
            for r in report.rows {
                if r.boundary_hits > 0 {
                    log::warn!(
                        "{}: {} at {} dB hit the search-box edge in {} of {} trials",
                        cfg.name,
                        r.method.name(),
                        r.snr_db,
                        r.boundary_hits,
                        r.trials
                    );
                }
                tables.monte_carlo.push(MonteCarloCsvRow {
                    scenario: cfg.name.clone(),
                    method: r.method.name().into(),
                    snr_db: r.snr_db,
                    trials: r.trials,
                    mse_tau: r.mse_tau,
                    mse_gamma: r.mse_gamma,
                    crlb_tau: r.crlb_tau,
                    crlb_gamma: r.crlb_gamma,
                });
            }
        }
    }
    Ok(tables)
}

fn crlb_row(
    cfg: &ScenarioConfig,
    sweep: &str,
    point: &ScenarioPoint,
    params: &EffectiveParams,
    snr_db: f64,
    n0: f64,
    r: &CrlbResult,
) -> CrlbRow {
    CrlbRow {
        scenario: cfg.name.clone(),
        sweep: sweep.into(),
        sweep_value: point.sweep_value,
        p: point.scene.num_scatterers(),
        snr_db,
        n0,
        energy: params.energy,
        bandwidth: params.bandwidth,
        duration: params.duration,
        time_bandwidth: params.time_bandwidth,
        crlb_tau: r.crlb_tau,
        crlb_gamma: r.crlb_gamma,
        a11: r.a11,
        a12: r.a12,
        a22: r.a22,
        condition: r.condition,
        provenance: r.provenance.to_string(),
    }
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| CrlbError::Io(e.to_string()))
}

/// Overrides applied on top of a scenario file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
}

impl RunOptions {
    pub fn apply(&self, cfg: &ScenarioConfig) -> ScenarioConfig {
        let mut c = cfg.clone();
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let (Some(t), Some(mc)) = (self.trials, c.monte_carlo.as_mut()) {
            mc.trials = t;
        }
        c.output_dir = None;
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub rows: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub scenario: String,
    pub description: String,
    pub package: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    pub files: Vec<FileEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioOutcome {
    pub name: String,
    pub dir: PathBuf,
    pub manifest: Manifest,
}

/// Run one scenario and write its CSVs, config copy and manifest into
/// `root/<name>/`.
pub fn run_to_dir(cfg: &ScenarioConfig, root: &Path, quad: &Quadrature) -> Result<ScenarioOutcome> {
    let tables = run_scenario(cfg, quad)?;
    let dir = root.join(&cfg.name);
    fs::create_dir_all(&dir)?;
    let mut files = Vec::new();
    let mut emit = |name: &str, bytes: Vec<u8>, rows: usize| -> Result<()> {
        fs::write(dir.join(name), &bytes)?;
        files.push(FileEntry {
            name: name.into(),
            rows,
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        Ok(())
    };
    emit(CRLB_CSV, csv_bytes(&tables.crlb)?, tables.crlb.len())?;
    if !tables.series.is_empty() {
        emit(SERIES_CSV, csv_bytes(&tables.series)?, tables.series.len())?;
    }
    if !tables.monte_carlo.is_empty() {
        emit(MONTE_CARLO_CSV, csv_bytes(&tables.monte_carlo)?, tables.monte_carlo.len())?;
    }
    let toml_text = cfg.canonical_toml()?;
    fs::write(dir.join(CONFIG_COPY), &toml_text)?;
    let manifest = Manifest {
        scenario: cfg.name.clone(),
        description: cfg.description.clone(),
        package: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: hex::encode(Sha256::digest(toml_text.as_bytes())),
        seed: cfg.seed,
        trials: cfg.monte_carlo.as_ref().map(|m| m.trials),
        files,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| CrlbError::Io(e.to_string()))?;
    fs::write(dir.join(MANIFEST), json + "\n")?;
    Ok(ScenarioOutcome {
        name: cfg.name.clone(),
        dir,
        manifest,
    })
}

/// Run every scenario of a file in order. Scenarios that fail are skipped
/// and reported together as a partial-run error after the rest finish.
pub fn run_file(file: &ConfigFile, opts: &RunOptions, quad: &Quadrature) -> Result<Vec<ScenarioOutcome>> {
    file.validate()?;
    let mut done = Vec::new();
    let mut failures = String::new();
    let mut failed = 0;
    for s in &file.scenarios {
        let root = opts
            .out
            .clone()
            .or_else(|| s.output_dir.clone())
            .or_else(|| file.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        let cfg = opts.apply(s);
        match run_to_dir(&cfg, &root, quad) {
            Ok(o) => done.push(o),
            Err(e) => {
                failed += 1;
                let _ = write!(failures, "{}{}: {e}", if failed > 1 { "; " } else { "" }, s.name);
            }
        }
    }
    if failed > 0 {
        return Err(CrlbError::PartialRun {
            failed,
            total: file.scenarios.len(),
            details: failures,
        });
    }
    Ok(done)
}

fn reference_scenario(name: &str, description: &str, p: usize) -> ScenarioConfig {
    ScenarioConfig {
        name: name.into(),
        description: description.into(),
        seed: default_seed(),
        output_dir: None,
        waveform: WaveformConfig::chirp(2.56e9, 5e-5),
        scene: SceneConfig::reference(p),
        noise: NoiseAxis::default(),
        sweep: None,
        monte_carlo: None,
    }
}

/// Built-in scenarios in a stable order.
pub fn catalog() -> Vec<ScenarioConfig> {
    let mc = Some(MonteCarloConfig::default());
    let series = |orders: Vec<usize>| Some(Sweep::SeriesOrder { orders, exact_f33: true });
    vec![
        ScenarioConfig {
            monte_carlo: mc.clone(),
            ..reference_scenario("fig-mse-p4", "Delay/stretch CRLB and estimator MSE vs SNR, P = 4", 4)
        },
        ScenarioConfig {
            monte_carlo: mc,
            ..reference_scenario("fig-mse-p16", "Delay/stretch CRLB and estimator MSE vs SNR, P = 16", 16)
        },
        ScenarioConfig {
            sweep: series(vec![1]),
            ..reference_scenario("fig-series-p4", "K = 1 series CRLB vs integral CRLB, P = 4", 4)
        },
        ScenarioConfig {
            sweep: series(vec![1]),
            ..reference_scenario("fig-series-p16", "K = 1 series CRLB vs integral CRLB, P = 16", 16)
        },
        ScenarioConfig {
            sweep: series(vec![1, 2, 3, 4]),
            ..reference_scenario("fig-k-sweep", "Series CRLB for K = 1..4, P = 16", 16)
        },
        ScenarioConfig {
            sweep: Some(Sweep::Scatterers {
                values: vec![1, 4, 16, 100],
            }),
            ..reference_scenario("fig-p-sweep", "CRLB vs SNR for P = 1, 4, 16, 100", 1)
        },
        ScenarioConfig {
            sweep: Some(Sweep::ChirpRate {
                start: 0.256e9,
                stop: 2.56e9,
                points: 10,
            }),
            ..reference_scenario(
                "fig-bandwidth-sweep",
                "Delay CRLB as the chirp rate (effective bandwidth) grows, P = 4",
                4,
            )
        },
        ScenarioConfig {
            sweep: Some(Sweep::ChirpRate {
                start: 0.256e9,
                stop: 2.56e9,
                points: 10,
            }),
            ..reference_scenario(
                "fig-tbp-varying",
                "Stretch CRLB as the time-bandwidth product grows at nearly fixed duration, P = 4",
                4,
            )
        },
        ScenarioConfig {
            sweep: Some(Sweep::Duration {
                product: 6.4,
                start: 1.5e-5,
                stop: 5e-5,
                points: 8,
            }),
            ..reference_scenario(
                "fig-tbp-fixed",
                "Stretch CRLB with a T^2 = 6.4 fixed and T from 1.5e-5 to 5e-5 s, P = 4",
                4,
            )
        },
        ScenarioConfig {
            sweep: Some(Sweep::Amplitude {
                values: vec![1.0, 2.0, 4.0, 8.0, 16.0],
            }),
            noise: NoiseAxis::n0_list(&[1e-9]),
            ..reference_scenario("scaling-amplitude", "Delay CRLB vs waveform energy at fixed N0, P = 1", 1)
        },
    ]
}

pub fn builtin(name: &str) -> Option<ScenarioConfig> {
    catalog().into_iter().find(|s| s.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(name: &str) -> ScenarioConfig {
        ScenarioConfig {
            noise: NoiseAxis::snr_list(&[10.0, 20.0]),
            ..reference_scenario(name, "", 2)
        }
    }

    #[test]
    fn snr_axis_defaults_to_ten_to_forty() {
        let NoiseLevels::SnrDb(v) = NoiseAxis::default().resolve("n").unwrap() else {
            panic!()
        };
        assert_eq!(v.len(), 16);
        assert_eq!(v[0], 10.0);
        assert_eq!(v[15], 40.0);
        let both = NoiseAxis {
            snr_db: Some(vec![1.0]),
            n0: Some(vec![1.0]),
            ..Default::default()
        };
        assert!(both.resolve("n").is_err());
    }

    #[test]
    fn catalog_names_are_unique_and_valid() {
        let c = catalog();
        let names: BTreeSet<_> = c.iter().map(|s| s.name.clone()).collect();
        assert_eq!(names.len(), c.len());
        for want in ["fig-mse-p4", "fig-mse-p16", "fig-k-sweep", "fig-p-sweep", "fig-bandwidth-sweep", "fig-tbp-fixed"] {
            assert!(names.contains(want), "{want}");
        }
        let Some(Sweep::Scatterers { values }) = builtin("fig-p-sweep").unwrap().sweep else {
            panic!()
        };
        assert_eq!(values, vec![1, 4, 16, 100]);
        for (i, s) in c.iter().enumerate() {
            s.validate(i).unwrap();
        }
    }

    #[test]
    fn canonical_toml_round_trips() {
        for s in catalog() {
            let text = s.canonical_toml().unwrap();
            let back = ConfigFile::parse(&text, Path::new(".")).unwrap();
            assert_eq!(back.scenarios, vec![s]);
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"
[[scenario]]
name = "x"
waveform = { family = "chirp", rate = 1e9, duration = 5e-5, colour = 3 }
scene = { tau = 2e-4, gamma = 1.0, delta = 6.25e-8 }
"#;
        let e = ConfigFile::parse(text, Path::new(".")).unwrap_err();
        assert!(e.to_string().contains("colour"), "{e}");
        let text = r#"
[[scenario]]
name = "x"
waveform = { family = "chirp", rate = 1e9, duration = 5e-5 }
scene = { tau = 2e-4, gamma = 1.0, delta = 6.25e-8 }
sweep = { kind = "chirp-rate", start = 1e9, stop = 2e9, points = 3, step = 1 }
"#;
        assert!(ConfigFile::parse(text, Path::new(".")).is_err());
    }

    #[test]
    fn validation_reports_field_paths() {
        let mut s = quick("a");
        s.waveform.rate = None;
        let e = ConfigFile {
            output_dir: None,
            scenarios: vec![quick("ok"), s],
        }
        .validate()
        .unwrap_err();
        assert_eq!(
            e,
            CrlbError::Config {
                path: "scenario[1].waveform.rate".into(),
                reason: "required for this family".into()
            }
        );
        let mut s = quick("a");
        s.scene.n_samples = Some(100);
        let CrlbError::Config { path, reason } = s.validate(0).unwrap_err() else {
            panic!()
        };
        assert_eq!(path, "scenario[0].scene");
        assert!(reason.contains("assumption 1"));
        let dup = ConfigFile {
            output_dir: None,
            scenarios: vec![quick("a"), quick("a")],
        };
        assert!(matches!(dup.validate(), Err(CrlbError::Config { .. })));
        let mut s = quick("a");
        s.sweep = Some(Sweep::ChirpRate {
            start: 2e9,
            stop: 1e9,
            points: 3,
        });
        assert!(s.validate(0).is_err());
    }

    #[test]
    fn crlb_rows_scale_with_noise() {
        let t = run_scenario(&quick("q"), &Quadrature::default()).unwrap();
        assert_eq!(t.crlb.len(), 2);
        let (lo, hi) = (&t.crlb[0], &t.crlb[1]);
        assert!((lo.crlb_tau / hi.crlb_tau - 10.0).abs() < 1e-9);
        assert!((lo.n0 / hi.n0 - 10.0).abs() < 1e-9);
        let direct = fisher::scene_crlb(
            &TargetScene::new(2e-4, REFERENCE_GAMMA, 6.25e-8, vec![Complex64::new(1.0, 0.0); 2], 5e-5, None).unwrap(),
            &WaveformSpec::chirp(2.56e9, 5e-5).unwrap(),
            hi.n0,
            &Quadrature::default(),
        )
        .unwrap();
        assert!((direct.crlb_tau / hi.crlb_tau - 1.0).abs() < 1e-12);
        assert!((direct.crlb_gamma / hi.crlb_gamma - 1.0).abs() < 1e-12);
    }

    #[test]
    fn duration_sweep_holds_the_product() {
        let s = builtin("fig-tbp-fixed").unwrap();
        let pts = s.points(0).unwrap();
        assert_eq!(pts.len(), 8);
        for p in pts {
            let WaveformFamily::Chirp { rate } = p.spec.family() else {
                panic!()
            };
            assert!((rate * p.spec.duration().powi(2) - 6.4).abs() < 1e-12);
        }
    }

    #[test]
    fn run_writes_manifest_and_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let s = quick("det");
        let a = run_to_dir(&s, &dir.path().join("a"), &Quadrature::default()).unwrap();
        let b = run_to_dir(&s, &dir.path().join("b"), &Quadrature::default()).unwrap();
        assert_eq!(a.manifest, b.manifest);
        let bytes = |o: &ScenarioOutcome| fs::read(o.dir.join(CRLB_CSV)).unwrap();
        assert_eq!(bytes(&a), bytes(&b));
        let head = String::from_utf8(bytes(&a)).unwrap();
        assert!(head.starts_with("scenario,sweep,sweep_value,P,snr_db,n0,"));
        let copy = ConfigFile::load(a.dir.join(CONFIG_COPY)).unwrap();
        assert_eq!(copy.scenarios[0].config_hash().unwrap(), a.manifest.config_sha256);
    }
}
