//! Python bindings for `uq_perceiver`.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyIndexError, PyValueError};
use pyo3::prelude::*;

use uq_perceiver::harness::{self, MetricsReport};
use uq_perceiver::metrics::{self as m, EvalBatch};
use uq_perceiver::schedule::LrSchedule;
use uq_perceiver::Error;

fn to_py(e: Error) -> PyErr {
    let msg = format!("{}: {e}", e.category());
    match e {
        Error::Io { .. } => PyIOError::new_err(msg),
        Error::Range(_) => PyIndexError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

/// Run configuration. Keys match the `key = value` config file format.
#[pyclass(name = "RunConfig", from_py_object)]
#[derive(Clone)]
struct PyRunConfig {
    inner: harness::RunConfig,
}

#[pymethods]
impl PyRunConfig {
    #[new]
    #[pyo3(signature = (text = ""))]
    fn new(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: harness::RunConfig::parse(text).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: harness::RunConfig::load(&path).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn keys() -> Vec<&'static str> {
        harness::KEYS.to_vec()
    }

    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        self.inner.set(key, value).map_err(to_py)
    }

    fn get(&self, key: &str) -> PyResult<String> {
        self.inner.get(key).map_err(to_py)
    }

    fn echo(&self) -> String {
        self.inner.echo()
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(to_py)
    }

    /// Parameter count of the model this config describes for the given input.
    fn param_count(&self, height: usize, width: usize, channels: usize, num_classes: usize) -> PyResult<usize> {
        let cfg = self.inner.model(height, width, channels, num_classes);
        Ok(uq_perceiver::model::param_count(&cfg).map_err(to_py)?.total)
    }

    fn __repr__(&self) -> String {
        format!("RunConfig(strategy={}, seed={})", self.inner.strategy, self.inner.seed)
    }
}

#[pyclass(name = "MetricsReport", get_all, skip_from_py_object)]
#[derive(Clone)]
struct PyReport {
    variant: String,
    ensemble_size: usize,
    seed: u64,
    accuracy: f64,
    nll: f64,
    ece: f64,
    brier: f64,
    temperatures: Vec<f64>,
    mc_delta: Option<f64>,
    wall_clock_seconds: f64,
    config_echo: String,
}

impl From<MetricsReport> for PyReport {
    fn from(r: MetricsReport) -> Self {
        Self {
            variant: r.variant,
            ensemble_size: r.ensemble_size,
            seed: r.seed,
            accuracy: r.accuracy,
            nll: r.nll,
            ece: r.ece,
            brier: r.brier,
            temperatures: r.temperatures,
            mc_delta: r.mc_delta,
            wall_clock_seconds: r.wall_clock_seconds,
            config_echo: r.config_echo,
        }
    }
}

#[pymethods]
impl PyReport {
    fn __repr__(&self) -> String {
        format!(
            "MetricsReport(variant={}, size={}, accuracy={:.4}, nll={:.4}, ece={:.4}, brier={:.4})",
            self.variant, self.ensemble_size, self.accuracy, self.nll, self.ece, self.brier
        )
    }
}

/// Trains the configured strategy; returns the run directory.
#[pyfunction]
fn train(py: Python<'_>, config: &PyRunConfig) -> PyResult<PathBuf> {
    let cfg = config.inner.clone();
    let out = py.detach(|| harness::run_train(&cfg)).map_err(to_py)?;
    Ok(out.dir)
}

#[pyfunction]
#[pyo3(signature = (config, run_dir = None))]
fn evaluate(py: Python<'_>, config: &PyRunConfig, run_dir: Option<PathBuf>) -> PyResult<PyReport> {
    let cfg = config.inner.clone();
    let dir = run_dir.unwrap_or_else(|| cfg.out_dir.clone());
    let r = py.detach(|| harness::run_evaluate(&cfg, &dir)).map_err(to_py)?;
    Ok(r.into())
}

#[pyfunction]
#[pyo3(signature = (config, run_dir = None))]
fn sweep_ensemble(py: Python<'_>, config: &PyRunConfig, run_dir: Option<PathBuf>) -> PyResult<Vec<PyReport>> {
    let cfg = config.inner.clone();
    let dir = run_dir.unwrap_or_else(|| cfg.out_dir.clone());
    let rs = py.detach(|| harness::sweep_ensemble(&cfg, &dir)).map_err(to_py)?;
    Ok(rs.into_iter().map(Into::into).collect())
}

fn batch(probs: Vec<Vec<f64>>, labels: Vec<usize>) -> PyResult<EvalBatch> {
    EvalBatch::new(probs, labels).map_err(to_py)
}

/// Accuracy, NLL (nats), ECE and Brier score of a probability matrix.
#[pyfunction]
#[pyo3(signature = (probs, labels, bins = m::DEFAULT_ECE_BINS))]
fn scores(probs: Vec<Vec<f64>>, labels: Vec<usize>, bins: usize) -> PyResult<(f64, f64, f64, f64)> {
    let b = batch(probs, labels)?;
    Ok((
        m::accuracy(&b),
        m::nll(&b),
        m::ece(&b, bins).map_err(to_py)?,
        m::brier(&b),
    ))
}

/// Fits a temperature on logits; returns `(T, nll_at_T, nll_at_1)`.
#[pyfunction]
fn temperature_scale(logits: Vec<Vec<f64>>, labels: Vec<usize>) -> PyResult<(f64, f64, f64)> {
    let fit = m::temperature_scale(&logits, &labels).map_err(to_py)?;
    Ok((fit.temperature, fit.nll, fit.unscaled_nll))
}

/// Learning rate at 1-based step `t` for a named schedule.
#[pyfunction]
#[pyo3(signature = (kind, t, total_steps, a, b = 0.0, cycles = 1))]
fn lr_at(kind: &str, t: usize, total_steps: usize, a: f64, b: f64, cycles: usize) -> PyResult<f64> {
    let s = match kind {
        "constant" => LrSchedule::constant(a, total_steps),
        "snapshot_cosine" => LrSchedule::snapshot_cosine(a, total_steps, cycles),
        "swa_linear" => LrSchedule::swa_linear(a, b, total_steps, cycles),
        "fast_cyclic" => LrSchedule::fast_cyclic(a, b, total_steps, cycles),
        other => return Err(PyValueError::new_err(format!("unknown schedule {other:?}"))),
    }
    .map_err(to_py)?;
    s.lr_at(t).map_err(to_py)
}

/// Reads a checkpoint; returns its config echo and `{name: (shape, values)}`.
#[pyfunction]
#[allow(clippy::type_complexity)]
fn read_checkpoint(path: PathBuf) -> PyResult<(String, Vec<(String, Vec<usize>, Vec<f64>)>)> {
    let ck = harness::read_checkpoint(&path).map_err(to_py)?;
    let params = ck
        .params
        .iter()
        .map(|(name, t)| (name.to_string(), t.shape().to_vec(), t.data().to_vec()))
        .collect();
    Ok((ck.config_echo, params))
}

#[pyfunction]
fn derive_seed(base: u64, index: u64) -> u64 {
    uq_perceiver::rng::derive_seed(base, index)
}

#[pymodule]
fn uq_perceiver_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRunConfig>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_ensemble, m)?)?;
    m.add_function(wrap_pyfunction!(scores, m)?)?;
    m.add_function(wrap_pyfunction!(temperature_scale, m)?)?;
    m.add_function(wrap_pyfunction!(lr_at, m)?)?;
    m.add_function(wrap_pyfunction!(read_checkpoint, m)?)?;
    m.add_function(wrap_pyfunction!(derive_seed, m)?)?;
    Ok(())
}
