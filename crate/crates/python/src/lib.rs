//! Python bindings: `import rectify`.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use ::rectify as core;
use core::diagnostics;
use core::estimator::{EstimateOptions, EstimateReport, VarianceMode};
use core::treatment::{AteMethod, AteReport};
use core::{PoolKind, StudyData, TwoArmStudy};

fn py_err(e: core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn variance_mode(name: &str) -> PyResult<VarianceMode> {
    match name {
        "design" => Ok(VarianceMode::DesignSrswor),
        "superpop-indep" => Ok(VarianceMode::SuperpopIndependent),
        "superpop-nested" => Ok(VarianceMode::SuperpopNested),
        other => Err(PyValueError::new_err(format!(
            "unknown variance mode {other:?}; expected design, superpop-indep or superpop-nested"
        ))),
    }
}

fn ate_method(name: &str) -> PyResult<AteMethod> {
    match name {
        "armwise" => Ok(AteMethod::ArmwiseRectifier),
        "pooled" => Ok(AteMethod::PooledRectifier),
        "naive" => Ok(AteMethod::NaiveImputation),
        other => Err(PyValueError::new_err(format!(
            "unknown ATE method {other:?}; expected armwise, pooled or naive"
        ))),
    }
}

fn options(variance: &str, level: f64) -> PyResult<EstimateOptions> {
    Ok(EstimateOptions {
        variance_mode: variance_mode(variance)?,
        level,
    })
}

/// Predictions over a pool with gold-standard outcomes on a labeled subset.
#[pyclass(name = "Study", frozen)]
struct PyStudy {
    inner: StudyData,
}

#[pymethods]
impl PyStudy {
    /// Nested study: `outcomes[i]` is `None` for unlabeled units.
    #[new]
    fn new(predictions: Vec<f64>, outcomes: Vec<Option<f64>>) -> PyResult<Self> {
        let inner = StudyData::nested(predictions, outcomes).map_err(py_err)?;
        Ok(PyStudy { inner })
    }

    /// Labeled sample drawn separately from the prediction pool.
    #[staticmethod]
    fn independent(pool_predictions: Vec<f64>, labeled_outcomes: Vec<f64>, labeled_predictions: Vec<f64>) -> PyResult<Self> {
        if labeled_outcomes.len() != labeled_predictions.len() {
            return Err(PyValueError::new_err("labeled outcomes and predictions differ in length"));
        }
        let pairs = labeled_outcomes.into_iter().zip(labeled_predictions).collect();
        let inner = StudyData::independent(pool_predictions, pairs).map_err(py_err)?;
        Ok(PyStudy { inner })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn pool_size(&self) -> usize {
        self.inner.pool_size()
    }

    #[getter]
    fn nested(&self) -> bool {
        self.inner.pool_kind() == PoolKind::NestedCensus
    }

    #[pyo3(signature = (variance = "design", level = 0.95))]
    fn ppi(&self, variance: &str, level: f64) -> PyResult<Estimate> {
        let report = core::ppi_mean(&self.inner, &options(variance, level)?).map_err(py_err)?;
        Ok(Estimate { inner: report })
    }

    /// `lam = None` estimates the slope from the labeled units.
    #[pyo3(signature = (lam = None, variance = "design", level = 0.95))]
    fn ppipp(&self, lam: Option<f64>, variance: &str, level: f64) -> PyResult<Estimate> {
        let report = core::ppi_pp_mean(&self.inner, lam, &options(variance, level)?).map_err(py_err)?;
        Ok(Estimate { inner: report })
    }

    #[pyo3(signature = (variance = "design", level = 0.95))]
    fn labeled_only(&self, variance: &str, level: f64) -> PyResult<Estimate> {
        let report = core::labeled_only_mean(&self.inner, &options(variance, level)?).map_err(py_err)?;
        Ok(Estimate { inner: report })
    }

    fn lambda_hat(&self) -> PyResult<f64> {
        core::lambda_hat(&self.inner).map_err(py_err)
    }

    fn design_effect(&self) -> PyResult<f64> {
        diagnostics::design_effect(&self.inner).map_err(py_err)
    }

    fn exchangeability(&self) -> f64 {
        diagnostics::exchangeability_check(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "Study(pool_size={}, n={}, pool={})",
            self.inner.pool_size(),
            self.inner.n(),
            self.inner.pool_kind().as_str()
        )
    }
}

#[pyclass(name = "Estimate", frozen)]
struct Estimate {
    inner: EstimateReport,
}

#[pymethods]
impl Estimate {
    #[getter]
    fn point(&self) -> f64 {
        self.inner.point
    }

    #[getter]
    fn variance(&self) -> f64 {
        self.inner.variance
    }

    #[getter]
    fn std_error(&self) -> f64 {
        self.inner.std_error
    }

    #[getter]
    fn ci(&self) -> (f64, f64) {
        (self.inner.ci_low, self.inner.ci_high)
    }

    #[getter]
    fn lam(&self) -> Option<f64> {
        self.inner.lambda
    }

    #[getter]
    fn notes(&self) -> Vec<String> {
        self.inner.notes.clone()
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("reports serialize")
    }

    fn __repr__(&self) -> String {
        format!(
            "Estimate(point={}, std_error={}, ci=({}, {}))",
            self.inner.point, self.inner.std_error, self.inner.ci_low, self.inner.ci_high
        )
    }
}

#[pyclass(name = "AteEstimate", frozen)]
struct AteEstimate {
    inner: AteReport,
}

#[pymethods]
impl AteEstimate {
    #[getter]
    fn tau_hat(&self) -> f64 {
        self.inner.tau_hat
    }

    #[getter]
    fn std_error(&self) -> f64 {
        self.inner.std_error
    }

    #[getter]
    fn ci(&self) -> (f64, f64) {
        (self.inner.ci_low, self.inner.ci_high)
    }

    #[getter]
    fn per_arm_points(&self) -> (f64, f64) {
        (self.inner.per_arm_points[0], self.inner.per_arm_points[1])
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("reports serialize")
    }
}

/// Average treatment effect of `arm1` over `arm0`, both nested studies.
#[pyfunction]
#[pyo3(signature = (arm0, arm1, method = "armwise", level = 0.95))]
fn ate(arm0: &PyStudy, arm1: &PyStudy, method: &str, level: f64) -> PyResult<AteEstimate> {
    let study = TwoArmStudy::new(arm0.inner.clone(), arm1.inner.clone()).map_err(py_err)?;
    let report = core::ate_estimate(&study, ate_method(method)?, level).map_err(py_err)?;
    Ok(AteEstimate { inner: report })
}

#[pyfunction]
fn theoretical_bias(method: &str, delta0: f64, delta1: f64, f0: f64, f1: f64) -> PyResult<f64> {
    core::theoretical_bias(ate_method(method)?, delta0, delta1, f0, f1).map_err(py_err)
}

/// Integer labels per stratum with `n_h ∝ N_h s_h`, summing to `budget`.
#[pyfunction]
#[pyo3(signature = (pool_sizes, dispersions, budget, min_per_stratum = 2))]
fn neyman_allocation(pool_sizes: Vec<usize>, dispersions: Vec<f64>, budget: usize, min_per_stratum: usize) -> PyResult<Vec<usize>> {
    if pool_sizes.len() != dispersions.len() {
        return Err(PyValueError::new_err("pool_sizes and dispersions differ in length"));
    }
    let strata: Vec<(usize, f64)> = pool_sizes.into_iter().zip(dispersions).collect();
    let plan = core::neyman_allocation(&strata, budget, min_per_stratum).map_err(py_err)?;
    Ok(plan.allocations)
}

/// Runs a simulation from TOML config text and returns the report as JSON.
#[pyfunction]
fn simulate(config_toml: &str) -> PyResult<String> {
    let cfg = core::SimulationConfig::from_toml(config_toml).map_err(py_err)?;
    let report = core::run_replications(&cfg).map_err(py_err)?;
    Ok(serde_json::to_string(&report).expect("reports serialize"))
}

#[pymodule]
fn rectify(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyStudy>()?;
    m.add_class::<Estimate>()?;
    m.add_class::<AteEstimate>()?;
    m.add_function(wrap_pyfunction!(ate, m)?)?;
    m.add_function(wrap_pyfunction!(theoretical_bias, m)?)?;
    m.add_function(wrap_pyfunction!(neyman_allocation, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
