//! Python module `extended_crlb`.

use std::path::PathBuf;

use extended_crlb::estimators::{self, Method, ReceivedSignal, SearchConfig, SearchPrior};
use extended_crlb::scenario::{self, ConfigFile, RunOptions};
use extended_crlb::{fisher, scene, series, waveform};
use extended_crlb::{CrlbResult, NoiseModel, Quadrature};
use num_complex::Complex64;
use pyo3::prelude::*;
use pyo3::types::PyDict;

pyo3::create_exception!(extended_crlb, CrlbError, pyo3::exceptions::PyValueError);

fn py_err(e: extended_crlb::CrlbError) -> PyErr {
    CrlbError::new_err((e.kind(), e.to_string()))
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for extended_crlb::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn quad() -> Quadrature {
    Quadrature::default()
}

fn crlb_dict<'py>(py: Python<'py>, r: &CrlbResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("crlb_tau", r.crlb_tau)?;
    d.set_item("crlb_gamma", r.crlb_gamma)?;
    d.set_item("a11", r.a11)?;
    d.set_item("a12", r.a12)?;
    d.set_item("a22", r.a22)?;
    d.set_item("condition", r.condition)?;
    d.set_item("provenance", r.provenance.to_string())?;
    Ok(d)
}

/// Time-limited transmitted envelope.
#[pyclass(name = "WaveformSpec", frozen, module = "extended_crlb")]
struct PyWaveform {
    inner: waveform::WaveformSpec,
}

#[pymethods]
impl PyWaveform {
    /// `cos(2 pi a t^2)` on `[0, T]`.
    #[staticmethod]
    fn chirp(rate: f64, duration: f64) -> PyResult<Self> {
        Ok(PyWaveform {
            inner: waveform::WaveformSpec::chirp(rate, duration).py()?,
        })
    }

    #[staticmethod]
    fn tone(carrier: f64, duration: f64) -> PyResult<Self> {
        Ok(PyWaveform {
            inner: waveform::WaveformSpec::tone(carrier, duration).py()?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (width, duration, carrier = 0.0))]
    fn gaussian_pulse(width: f64, duration: f64, carrier: f64) -> PyResult<Self> {
        Ok(PyWaveform {
            inner: waveform::WaveformSpec::gaussian_pulse(width, carrier, duration).py()?,
        })
    }

    /// Envelope given on a uniform grid starting at `t = 0`.
    #[staticmethod]
    fn sampled(values: Vec<Complex64>, step: f64) -> PyResult<Self> {
        Ok(PyWaveform {
            inner: waveform::WaveformSpec::sampled(values, step).py()?,
        })
    }

    fn scaled(&self, amplitude: f64) -> PyResult<Self> {
        Ok(PyWaveform {
            inner: self.inner.scaled(amplitude).py()?,
        })
    }

    #[getter]
    fn duration(&self) -> f64 {
        self.inner.duration()
    }

    #[getter]
    fn amplitude(&self) -> f64 {
        self.inner.amplitude()
    }

    fn evaluate(&self, t: f64) -> Complex64 {
        self.inner.evaluate(t)
    }

    fn derivative(&self, t: f64, order: usize) -> PyResult<Complex64> {
        self.inner.derivative(t, order).py()
    }

    /// Energy, effective bandwidth (rad/s), effective durations and their product.
    fn effective_params<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let p = waveform::effective_params(&self.inner, &quad()).py()?;
        let d = PyDict::new(py);
        d.set_item("energy", p.energy)?;
        d.set_item("bandwidth", p.bandwidth)?;
        d.set_item("duration", p.duration)?;
        d.set_item("duration_t2", p.duration_t2)?;
        d.set_item("time_bandwidth", p.time_bandwidth)?;
        Ok(d)
    }

    /// `(M, M~)` as two 3 x (k_max + 1) nested lists indexed `[i][k]`.
    fn moments(&self, k_max: usize) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let m = waveform::moments(&self.inner, k_max, &quad()).py()?;
        Ok((m.plain.to_vec(), m.cross.to_vec()))
    }

    fn __repr__(&self) -> String {
        format!(
            "WaveformSpec({:?}, amplitude={}, duration={:e})",
            self.inner.family(),
            self.inner.amplitude(),
            self.inner.duration()
        )
    }
}

/// `P` equally spaced scatterers observed at interval `delta`.
#[pyclass(name = "TargetScene", frozen, module = "extended_crlb")]
struct PyScene {
    inner: scene::TargetScene,
}

#[pymethods]
impl PyScene {
    #[new]
    #[pyo3(signature = (tau, gamma, delta, x, duration, n_samples = None))]
    fn new(
        tau: f64,
        gamma: f64,
        delta: f64,
        x: Vec<Complex64>,
        duration: f64,
        n_samples: Option<usize>,
    ) -> PyResult<Self> {
        Ok(PyScene {
            inner: scene::TargetScene::new(tau, gamma, delta, x, duration, n_samples).py()?,
        })
    }

    #[getter]
    fn tau(&self) -> f64 {
        self.inner.tau()
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma()
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.inner.delta()
    }

    #[getter]
    fn coefficients(&self) -> Vec<Complex64> {
        self.inner.coefficients().to_vec()
    }

    #[getter]
    fn n_samples(&self) -> usize {
        self.inner.n_samples()
    }

    fn __len__(&self) -> usize {
        self.inner.num_scatterers()
    }

    fn __repr__(&self) -> String {
        format!(
            "TargetScene(tau={:e}, gamma={}, delta={:e}, P={}, N={})",
            self.inner.tau(),
            self.inner.gamma(),
            self.inner.delta(),
            self.inner.num_scatterers(),
            self.inner.n_samples()
        )
    }
}

/// Integral-representation CRLBs.
#[pyfunction]
fn crlb<'py>(py: Python<'py>, scene: &PyScene, waveform: &PyWaveform, n0: f64) -> PyResult<Bound<'py, PyDict>> {
    let r = py
        .detach(|| fisher::scene_crlb(&scene.inner, &waveform.inner, n0, &quad()))
        .py()?;
    crlb_dict(py, &r)
}

/// CRLBs from a finite-difference Fisher matrix of the sampled model.
#[pyfunction]
#[pyo3(signature = (scene, waveform, n0, rel_step = 1e-5))]
fn crlb_finite_difference<'py>(
    py: Python<'py>,
    scene: &PyScene,
    waveform: &PyWaveform,
    n0: f64,
    rel_step: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let r = py
        .detach(|| {
            let fim = fisher::fim_oracle_fd(&scene.inner, &waveform.inner, n0, rel_step)?;
            fisher::crlb_from_fim(&fim)
        })
        .py()?;
    crlb_dict(py, &r)
}

/// Closed-form single-scatterer CRLBs for a real coefficient `x`.
#[pyfunction]
fn crlb_single<'py>(
    py: Python<'py>,
    waveform: &PyWaveform,
    x: f64,
    gamma: f64,
    n0: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let r = fisher::crlb_single(&waveform.inner, x, gamma, n0, &quad()).py()?;
    crlb_dict(py, &r)
}

/// `K`-truncated series CRLBs with the exact nuisance block.
#[pyfunction]
#[pyo3(signature = (scene, waveform, n0, order = series::DEFAULT_ORDER))]
fn series_crlb<'py>(
    py: Python<'py>,
    scene: &PyScene,
    waveform: &PyWaveform,
    n0: f64,
    order: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let r = series::approx_crlb(&scene.inner, &waveform.inner, n0, order, &quad()).py()?;
    crlb_dict(py, &r)
}

/// Per-order gaps of the series bound against the integral bound.
#[pyfunction]
#[pyo3(signature = (scene, waveform, n0, orders, exact_f33 = true))]
fn truncation_decay<'py>(
    py: Python<'py>,
    scene: &PyScene,
    waveform: &PyWaveform,
    n0: f64,
    orders: Vec<usize>,
    exact_f33: bool,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let t = series::truncation_decay(&scene.inner, &waveform.inner, n0, &orders, exact_f33, &quad()).py()?;
    t.rows
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("order", r.order)?;
            d.set_item("crlb_tau", r.crlb_tau)?;
            d.set_item("crlb_gamma", r.crlb_gamma)?;
            d.set_item("gap_tau", r.gap_tau)?;
            d.set_item("gap_gamma", r.gap_gamma)?;
            d.set_item("failure", r.failure.clone())?;
            Ok(d)
        })
        .collect()
}

/// Noise level giving the requested SNR.
#[pyfunction]
fn n0_for_snr(scene: &PyScene, waveform: &PyWaveform, snr_db: f64) -> PyResult<f64> {
    let g = scene::gram_matrix(&scene.inner, &waveform.inner, &quad()).py()?;
    scene::n0_for_snr(&scene.inner, &g, snr_db).py()
}

#[pyfunction]
fn noiseless_echo(scene: &PyScene, waveform: &PyWaveform) -> PyResult<Vec<Complex64>> {
    Ok(scene::noiseless_echo(&scene.inner, &waveform.inner).py()?.iter().copied().collect())
}

/// `y = Phi x + w` with noise drawn from stream `stream` of `seed`.
#[pyfunction]
#[pyo3(signature = (scene, waveform, n0, seed, stream = 0))]
fn synthesize_echo(scene: &PyScene, waveform: &PyWaveform, n0: f64, seed: u64, stream: u64) -> PyResult<Vec<Complex64>> {
    let noise = NoiseModel::new(n0, seed).py()?;
    Ok(scene::synthesize_echo(&scene.inner, &waveform.inner, &noise, stream)
        .py()?
        .iter()
        .copied()
        .collect())
}

/// Grid search plus refinement on one received echo.
/// `method` is `"wbaf"` or `"oracle-mf"`; the oracle needs `coefficients`.
#[pyfunction]
#[pyo3(signature = (method, samples, delta, waveform, tau_center, gamma_center, coefficients = None))]
#[allow(clippy::too_many_arguments)]
fn estimate<'py>(
    py: Python<'py>,
    method: &str,
    samples: Vec<Complex64>,
    delta: f64,
    waveform: &PyWaveform,
    tau_center: f64,
    gamma_center: f64,
    coefficients: Option<Vec<Complex64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let method: Method = method.parse().py()?;
    if method == Method::OracleMf && coefficients.is_none() {
        return Err(py_err(extended_crlb::CrlbError::InvalidParameter {
            field: "coefficients".into(),
            reason: "the oracle estimator needs the true coefficients".into(),
        }));
    }
    let prior = SearchPrior {
        tau_center,
        gamma_center,
        coefficients: coefficients.unwrap_or_else(|| vec![Complex64::new(1.0, 0.0)]),
    };
    let e = py
        .detach(|| {
            let r = ReceivedSignal::new(&samples, delta)?;
            estimators::estimate(method, &r, &waveform.inner, &prior, &SearchConfig::default())
        })
        .py()?;
    let d = PyDict::new(py);
    d.set_item("tau", e.tau)?;
    d.set_item("gamma", e.gamma)?;
    d.set_item("method", e.method.name())?;
    d.set_item("coarse_peak", e.coarse_peak)?;
    d.set_item("peak", e.peak)?;
    d.set_item("evaluations", e.evaluations)?;
    d.set_item("boundary_hit", e.boundary_hit)?;
    Ok(d)
}

/// Monte Carlo MSEs of the estimators next to the CRLBs.
#[pyfunction]
#[pyo3(signature = (scene, waveform, snr_db, trials, seed, methods = None))]
fn monte_carlo<'py>(
    py: Python<'py>,
    scene: &PyScene,
    waveform: &PyWaveform,
    snr_db: Vec<f64>,
    trials: usize,
    seed: u64,
    methods: Option<Vec<String>>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let methods: Vec<Method> = match methods {
        Some(v) => v.iter().map(|m| m.parse()).collect::<extended_crlb::Result<_>>().py()?,
        None => vec![Method::OracleMf, Method::Wbaf],
    };
    let rep = py
        .detach(|| {
            estimators::monte_carlo(
                &scene.inner,
                &waveform.inner,
                &snr_db,
                trials,
                seed,
                &methods,
                &SearchConfig::default(),
                &quad(),
            )
        })
        .py()?;
    rep.rows
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("method", r.method.name())?;
            d.set_item("snr_db", r.snr_db)?;
            d.set_item("trials", r.trials)?;
            d.set_item("mse_tau", r.mse_tau)?;
            d.set_item("mse_gamma", r.mse_gamma)?;
            d.set_item("crlb_tau", r.crlb_tau)?;
            d.set_item("crlb_gamma", r.crlb_gamma)?;
            d.set_item("boundary_hits", r.boundary_hits)?;
            Ok(d)
        })
        .collect()
}

/// Built-in scenarios as `(name, description)` pairs.
#[pyfunction]
fn list_scenarios() -> Vec<(String, String)> {
    scenario::catalog().into_iter().map(|s| (s.name, s.description)).collect()
}

/// Run a scenario file or built-in name; returns the output directories.
#[pyfunction]
#[pyo3(signature = (config, out = None, seed = None, trials = None))]
fn run_scenario(
    py: Python<'_>,
    config: &str,
    out: Option<PathBuf>,
    seed: Option<u64>,
    trials: Option<usize>,
) -> PyResult<Vec<PathBuf>> {
    let file = ConfigFile::load_or_builtin(config).py()?;
    let opts = RunOptions { out, seed, trials };
    let done = py.detach(|| scenario::run_file(&file, &opts, &quad())).py()?;
    Ok(done.into_iter().map(|o| o.dir).collect())
}

#[pymodule]
#[pyo3(name = "extended_crlb")]
fn extended_crlb_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("CrlbError", m.py().get_type::<CrlbError>())?;
    m.add_class::<PyWaveform>()?;
    m.add_class::<PyScene>()?;
    m.add_function(wrap_pyfunction!(crlb, m)?)?;
    m.add_function(wrap_pyfunction!(crlb_finite_difference, m)?)?;
    m.add_function(wrap_pyfunction!(crlb_single, m)?)?;
    m.add_function(wrap_pyfunction!(series_crlb, m)?)?;
    m.add_function(wrap_pyfunction!(truncation_decay, m)?)?;
    m.add_function(wrap_pyfunction!(n0_for_snr, m)?)?;
    m.add_function(wrap_pyfunction!(noiseless_echo, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize_echo, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(monte_carlo, m)?)?;
    m.add_function(wrap_pyfunction!(list_scenarios, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn module_exposes_types_and_errors_map_to_python() {
        Python::attach(|py| {
            let m = PyModule::new(py, "extended_crlb").unwrap();
            extended_crlb_module(&m).unwrap();
            for name in ["WaveformSpec", "TargetScene", "crlb", "monte_carlo", "list_scenarios", "CrlbError"] {
                assert!(m.hasattr(name).unwrap(), "{name}");
            }
            let w = PyWaveform::chirp(2.56e9, 5e-5).unwrap();
            let s = PyScene::new(2e-4, 1.0 / 1.06, 6.25e-8, vec![Complex64::new(1.0, 0.0)], 5e-5, None).unwrap();
            let d = crlb(py, &s, &w, 1e-6).unwrap();
            let tau: f64 = d.get_item("crlb_tau").unwrap().unwrap().extract().unwrap();
            assert!(tau > 0.0);
            let err = PyWaveform::chirp(1e9, -1.0).err().unwrap();
            assert!(err.is_instance_of::<CrlbError>(py));
        });
    }
}
