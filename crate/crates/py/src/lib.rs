//! Python bindings: scaling-law fits, metrics, synthetic populations,
//! Monte Carlo checks and the experiment pipeline.

use std::path::Path;

use loadscale::experiment::{run_experiment, Experiment, ExperimentConfig, FitRecord};
use loadscale::metrics::Metric;
use loadscale::scaling::{self, ErrorPoint, Regime};
use loadscale::synth::{self, ProfileParams};
use loadscale::{forecast, metrics, theory};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: loadscale::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_metric(name: &str) -> PyResult<Metric> {
    match name.to_ascii_uppercase().as_str() {
        "MAPE" => Ok(Metric::Mape),
        "CV" => Ok(Metric::Cv),
        other => Err(PyValueError::new_err(format!("unknown metric {other:?}"))),
    }
}

/// err(W) = sqrt(alpha0 / W^p + alpha1)
#[pyclass(name = "ScalingFit", frozen)]
struct PyScalingFit(scaling::ScalingFit);

#[pymethods]
impl PyScalingFit {
    #[new]
    #[pyo3(signature = (sqrt_alpha0, sqrt_alpha1, p, metric = "MAPE", horizon = 1))]
    fn new(
        sqrt_alpha0: f64,
        sqrt_alpha1: f64,
        p: f64,
        metric: &str,
        horizon: usize,
    ) -> PyResult<Self> {
        Ok(Self(scaling::ScalingFit::from_sqrt(
            sqrt_alpha0,
            sqrt_alpha1,
            p,
            parse_metric(metric)?,
            horizon,
        )))
    }

    #[getter]
    fn sqrt_alpha0(&self) -> f64 {
        self.0.sqrt_alpha0()
    }

    #[getter]
    fn sqrt_alpha1(&self) -> f64 {
        self.0.sqrt_alpha1()
    }

    #[getter]
    fn p(&self) -> f64 {
        self.0.p
    }

    #[getter]
    fn metric(&self) -> &'static str {
        self.0.metric.as_str()
    }

    #[getter]
    fn sse(&self) -> f64 {
        self.0.sse
    }

    fn critical_load(&self) -> PyResult<f64> {
        scaling::critical_load(&self.0).map_err(py_err)
    }

    fn predict(&self, w: f64) -> f64 {
        scaling::predict_error(&self.0, w)
    }

    #[pyo3(signature = (w, factor = scaling::DEFAULT_REGIME_FACTOR))]
    fn regime(&self, w: f64, factor: f64) -> &'static str {
        let r: Regime = scaling::classify_regime(w, &self.0, factor);
        r.as_str()
    }

    fn __repr__(&self) -> String {
        format!(
            "ScalingFit(sqrt_alpha0={:.4}, sqrt_alpha1={:.4}, p={:.4}, metric={})",
            self.0.sqrt_alpha0(),
            self.0.sqrt_alpha1(),
            self.0.p,
            self.0.metric
        )
    }
}

fn points(
    w: &[f64],
    err: &[f64],
    sizes: Option<Vec<usize>>,
    metric: Metric,
) -> PyResult<Vec<ErrorPoint>> {
    if w.len() != err.len() || sizes.as_ref().is_some_and(|s| s.len() != w.len()) {
        return Err(PyValueError::new_err(
            "w, err and sizes must have equal lengths",
        ));
    }
    Ok(w.iter()
        .zip(err)
        .enumerate()
        .map(|(i, (&w, &err))| ErrorPoint {
            group_id: i.to_string(),
            size: sizes.as_ref().map_or(i + 1, |s| s[i]),
            w,
            err,
            metric,
            horizon: 1,
        })
        .collect())
}

#[pyfunction]
#[pyo3(signature = (w, err, metric = "MAPE", fixed_p = None))]
fn fit_scaling_law(
    w: Vec<f64>,
    err: Vec<f64>,
    metric: &str,
    fixed_p: Option<f64>,
) -> PyResult<PyScalingFit> {
    let pts = points(&w, &err, None, parse_metric(metric)?)?;
    scaling::fit_scaling_law(&pts, fixed_p)
        .map(PyScalingFit)
        .map_err(py_err)
}

/// Percentile interval on sqrt(alpha1), resampling within each group size.
#[pyfunction]
#[pyo3(signature = (w, err, sizes, replicates = 1000, level = 0.95, seed = 0, fixed_p = None))]
fn bootstrap_ci(
    w: Vec<f64>,
    err: Vec<f64>,
    sizes: Vec<usize>,
    replicates: usize,
    level: f64,
    seed: u64,
    fixed_p: Option<f64>,
) -> PyResult<(f64, f64)> {
    let pts = points(&w, &err, Some(sizes), Metric::Mape)?;
    scaling::bootstrap_ci(&pts, replicates, level, seed, fixed_p).map_err(py_err)
}

#[pyfunction]
fn mape(actual: Vec<f64>, predicted: Vec<f64>) -> PyResult<f64> {
    metrics::mape(&actual, &predicted)
        .map(|m| m.value)
        .map_err(py_err)
}

#[pyfunction]
fn cv(actual: Vec<f64>, predicted: Vec<f64>) -> PyResult<f64> {
    metrics::cv(&actual, &predicted).map_err(py_err)
}

#[pyfunction]
fn mse(actual: Vec<f64>, predicted: Vec<f64>) -> PyResult<f64> {
    metrics::mse(&actual, &predicted).map_err(py_err)
}

#[pyfunction]
fn seasonal_naive(history: Vec<f64>, season: usize, h: usize) -> PyResult<Vec<f64>> {
    forecast::seasonal_naive(&history, season, h).map_err(py_err)
}

/// Fits SAR(p)x(P)_s and returns (theta, phi, center).
#[pyfunction]
fn fit_sar(
    history: Vec<f64>,
    ar_order: usize,
    seasonal_ar_order: usize,
    season: usize,
) -> PyResult<(Vec<f64>, Vec<f64>, f64)> {
    let spec = forecast::SarSpec::new(ar_order, seasonal_ar_order, season).map_err(py_err)?;
    let m = forecast::fit_sar(&history, &spec).map_err(py_err)?;
    Ok((m.theta, m.phi, m.center))
}

#[pyclass(name = "DeviationModel", frozen)]
struct PyDeviationModel(synth::DeviationModel);

#[pymethods]
impl PyDeviationModel {
    #[staticmethod]
    fn uncorrelated(sigma: f64) -> PyResult<Self> {
        synth::DeviationModel::uncorrelated(sigma)
            .map(Self)
            .map_err(py_err)
    }

    #[staticmethod]
    fn finite_k(k_neighbors: usize, rho: f64, sigma: f64) -> PyResult<Self> {
        synth::DeviationModel::finite_k(k_neighbors, rho, sigma)
            .map(Self)
            .map_err(py_err)
    }

    #[staticmethod]
    fn random_pair(gamma: f64, rho: f64, sigma: f64) -> PyResult<Self> {
        synth::DeviationModel::random_pair(gamma, rho, sigma)
            .map(Self)
            .map_err(py_err)
    }

    fn with_persistence(&self, persistence: f64) -> PyResult<Self> {
        self.0
            .with_persistence(persistence)
            .map(Self)
            .map_err(py_err)
    }

    #[getter]
    fn kappa(&self) -> f64 {
        self.0.kappa()
    }

    /// Closed-form variance of the summed deviations of `n` customers.
    fn variance_of_sum(&self, n: usize) -> f64 {
        theory::variance_of_sum(&self.0, n)
    }

    fn mc_variance(&self, n: usize, trials: usize, seed: u64) -> PyResult<f64> {
        theory::mc_variance(&self.0, n, trials, seed).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("DeviationModel({:?})", self.0)
    }
}

/// Returns (ids, rows): one hourly series per customer.
#[pyfunction]
#[pyo3(signature = (n, days, deviation, seed, mean_mu = 1.05, profile_var = 0.01))]
fn synth_population(
    n: usize,
    days: usize,
    deviation: &PyDeviationModel,
    seed: u64,
    mean_mu: f64,
    profile_var: f64,
) -> PyResult<(Vec<String>, Vec<Vec<f64>>)> {
    let profile = ProfileParams {
        mean_mu,
        profile_var,
        ..ProfileParams::default()
    };
    let out = synth::synth_population(n, days, &profile, &deviation.0, seed).map_err(py_err)?;
    Ok(out
        .dataset
        .customers()
        .iter()
        .map(|c| (c.id.clone(), c.series.values().to_vec()))
        .unzip())
}

/// Monte Carlo check of the seasonal-naive CV envelope at population size `n`.
#[pyfunction]
#[pyo3(signature = (deviation, n, trials = 100, seed = 0, days = 14))]
fn mc_cv_check<'py>(
    py: Python<'py>,
    deviation: &PyDeviationModel,
    n: usize,
    trials: usize,
    seed: u64,
    days: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let params = synth::PopulationParams {
        days,
        profile: ProfileParams::default(),
        deviation: deviation.0,
    };
    let c = theory::mc_cv_check(&params, n, trials, seed).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("n", c.n)?;
    d.set_item("mean_cv", c.mean_cv)?;
    d.set_item("std_error", c.std_error)?;
    d.set_item("envelope", c.envelope)?;
    d.set_item("holds", c.holds)?;
    Ok(d)
}

/// The desk-scale experiment config as TOML.
#[pyfunction]
fn default_config(seed: u64) -> PyResult<String> {
    ExperimentConfig::desk(seed)
        .to_toml_string()
        .map_err(py_err)
}

fn fit_dict<'py>(py: Python<'py>, f: &FitRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("forecaster", &f.forecaster)?;
    d.set_item("metric", f.metric.as_str())?;
    d.set_item("horizon", f.horizon)?;
    d.set_item("sqrt_alpha0", f.sqrt_alpha0)?;
    d.set_item("sqrt_alpha1", f.sqrt_alpha1)?;
    d.set_item("p", f.p)?;
    d.set_item("w_star", f.w_star)?;
    d.set_item("ci", f.ci_lo.zip(f.ci_hi))?;
    Ok(d)
}

/// Runs groups, forecasts and fits from a TOML config, writing results to `out`.
#[pyfunction]
fn run(py: Python<'_>, config_toml: &str, out: &str) -> PyResult<Vec<Py<PyDict>>> {
    let cfg = ExperimentConfig::from_toml_str(config_toml).map_err(py_err)?;
    let exp = Experiment::new(cfg).map_err(py_err)?;
    let fits = run_experiment(&exp, Path::new(out)).map_err(py_err)?;
    fits.iter()
        .map(|f| fit_dict(py, f).map(Bound::unbind))
        .collect()
}

#[pymodule]
#[pyo3(name = "loadscale")]
fn loadscale_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScalingFit>()?;
    m.add_class::<PyDeviationModel>()?;
    m.add_function(wrap_pyfunction!(fit_scaling_law, m)?)?;
    m.add_function(wrap_pyfunction!(bootstrap_ci, m)?)?;
    m.add_function(wrap_pyfunction!(mape, m)?)?;
    m.add_function(wrap_pyfunction!(cv, m)?)?;
    m.add_function(wrap_pyfunction!(mse, m)?)?;
    m.add_function(wrap_pyfunction!(seasonal_naive, m)?)?;
    m.add_function(wrap_pyfunction!(fit_sar, m)?)?;
    m.add_function(wrap_pyfunction!(synth_population, m)?)?;
    m.add_function(wrap_pyfunction!(mc_cv_check, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
