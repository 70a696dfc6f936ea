//! Python bindings. Data crosses the boundary as nested lists of floats;
//! coefficients are always reported on the original scale.

use gril::penalty::PenaltyMatrix;
use gril::sim::{run_experiment, Method, SimDesign};
use gril::solver::{gril_path, LarsOptions};
use gril::theory::{
    grouping_check, re_check, risk_bound_check, sparsity_inequality_check, summary, CheckRow,
    RiskBoundSetup, SparsitySetup,
};
use gril::tuning::{gamma_from_dims, select_with_penalty, Selector, TuningConfig, DEFAULT_LAMBDA2_GRID};
use gril::{adagril_fit, gril_fit, make_weights, standardize, FitReport, GrilError, StandardizedDesign, WeightScheme, WeightVector};
use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: GrilError) -> PyErr {
    match e {
        GrilError::DegenerateStep(..) | GrilError::MaxStepsExceeded(_) | GrilError::NoConvergence(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = GrilError>>(s: &str) -> PyResult<T> {
    s.parse().map_err(err)
}

#[pyclass(name = "Dataset", module = "gril", skip_from_py_object)]
#[derive(Clone)]
pub struct PyDataset {
    inner: gril::Dataset,
}

#[pymethods]
impl PyDataset {
    #[new]
    fn new(x: Vec<Vec<f64>>, y: Vec<f64>) -> PyResult<Self> {
        let n = x.len();
        let p = x.first().map_or(0, Vec::len);
        if x.iter().any(|r| r.len() != p) {
            return Err(PyValueError::new_err("rows of x have different lengths"));
        }
        let m = DMatrix::from_fn(n, p, |i, j| x[i][j]);
        let inner = gril::Dataset::new(m, DVector::from_vec(y)).map_err(err)?;
        Ok(Self { inner })
    }

    /// First column is the response, the rest are predictors.
    #[staticmethod]
    #[pyo3(signature = (path, header = false))]
    fn from_csv(path: &str, header: bool) -> PyResult<Self> {
        Ok(Self { inner: gril::Dataset::from_csv_path(path, header).map_err(err)? })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn p(&self) -> usize {
        self.inner.p()
    }

    fn __repr__(&self) -> String {
        format!("Dataset(n={}, p={})", self.inner.n(), self.inner.p())
    }
}

#[pyclass(name = "Fit", module = "gril", skip_from_py_object, get_all)]
#[derive(Clone)]
pub struct PyFit {
    coefficients: Vec<f64>,
    intercept: f64,
    active: Vec<usize>,
    lambda1: f64,
    lambda2: f64,
    objective: f64,
    kkt_max_violation: f64,
    converged: bool,
    rescaled: bool,
}

#[pymethods]
impl PyFit {
    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        x.iter()
            .map(|row| {
                if row.len() != self.coefficients.len() {
                    return Err(PyValueError::new_err("row length differs from the number of coefficients"));
                }
                Ok(self.intercept + row.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum::<f64>())
            })
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Fit(active={:?}, lambda1={:e}, lambda2={:e}, converged={})",
            self.active, self.lambda1, self.lambda2, self.converged
        )
    }
}

fn report(std: &StandardizedDesign, fit: &FitReport) -> PyFit {
    let (beta, intercept) = std.to_original(fit.beta.beta());
    PyFit {
        coefficients: beta.iter().copied().collect(),
        intercept,
        active: fit.beta.active_set().iter().copied().collect(),
        lambda1: fit.lambda1,
        lambda2: fit.lambda2,
        objective: fit.objective,
        kkt_max_violation: fit.kkt_max_violation,
        converged: fit.converged(),
        rescaled: fit.rescaled,
    }
}

fn prepare(data: &PyDataset, method: Method, gamma_wf: f64, q: Option<Vec<Vec<f64>>>) -> PyResult<(StandardizedDesign, PenaltyMatrix)> {
    let std = standardize(&data.inner).map_err(err)?;
    let pm = match q {
        Some(rows) => {
            let p = std.p();
            if rows.len() != p || rows.iter().any(|r| r.len() != p) {
                return Err(PyValueError::new_err(format!("q must be {p}x{p}")));
            }
            PenaltyMatrix::from_q(DMatrix::from_fn(p, p, |i, j| rows[i][j])).map_err(err)?
        }
        None => method.penalty(gamma_wf).build(&std).map_err(err)?,
    };
    Ok((std, pm))
}

fn power_weights(std: &StandardizedDesign, init: &FitReport, gamma: Option<f64>) -> PyResult<WeightVector> {
    let g = gamma.unwrap_or_else(|| gamma_from_dims(std.n(), std.p()));
    make_weights(&init.inner, g, WeightScheme::PowerLaw, std.n()).map_err(err)
}

/// Fits one estimator. With `lambda1` given the fit runs at fixed tuning
/// parameters, otherwise `selector` ("bic", "cv", "cv5", ...) picks them.
#[pyfunction]
#[pyo3(signature = (data, method = "enet", lambda1 = None, lambda2 = None, lambda1_star = None, gamma = None, selector = "bic", seed = 0, gamma_wf = 1.0, rescale = true, q = None))]
#[allow(clippy::too_many_arguments)]
fn fit(
    py: Python<'_>,
    data: &PyDataset,
    method: &str,
    lambda1: Option<f64>,
    lambda2: Option<f64>,
    lambda1_star: Option<f64>,
    gamma: Option<f64>,
    selector: &str,
    seed: u64,
    gamma_wf: f64,
    rescale: bool,
    q: Option<Vec<Vec<f64>>>,
) -> PyResult<PyFit> {
    let method: Method = parse(method)?;
    let selector: Selector = parse(selector)?;
    let (std, pm) = prepare(data, method, gamma_wf, q)?;
    let result = py.detach(|| -> PyResult<FitReport> {
        match lambda1 {
            Some(l1) => {
                let l2 = if method.uses_lambda2() { lambda2.unwrap_or(0.0) } else { 0.0 };
                let init = gril_fit(std.data(), &pm, l1, l2).map_err(err)?;
                if !method.is_adaptive() {
                    return Ok(init);
                }
                let w = power_weights(&std, &init, gamma)?;
                adagril_fit(std.data(), &pm, lambda1_star.unwrap_or(l1), l2, &w, rescale).map_err(err)
            }
            None => {
                let grid = match (method.uses_lambda2(), lambda2) {
                    (false, _) => vec![0.0],
                    (true, Some(l2)) => vec![l2],
                    (true, None) => DEFAULT_LAMBDA2_GRID.to_vec(),
                };
                let cfg = TuningConfig {
                    lambda2_grid: grid,
                    selector,
                    seed,
                    gamma_override: gamma,
                    rescale,
                    ..TuningConfig::default()
                };
                Ok(select_with_penalty(std.data(), &pm, &cfg, method.is_adaptive()).map_err(err)?.fit)
            }
        }
    })?;
    Ok(report(&std, &result))
}

/// Piecewise-linear solution path in `lambda1` at fixed `lambda2`.
/// Returns `(breakpoints, intercepts, coefficients)` on the original scale.
/// Adaptive methods need `lambda1` for the initial fit.
#[pyfunction]
#[pyo3(signature = (data, method = "lasso", lambda2 = 0.0, lambda1 = None, gamma = None, gamma_wf = 1.0))]
fn path(
    data: &PyDataset,
    method: &str,
    lambda2: f64,
    lambda1: Option<f64>,
    gamma: Option<f64>,
    gamma_wf: f64,
) -> PyResult<(Vec<f64>, Vec<f64>, Vec<Vec<f64>>)> {
    let method: Method = parse(method)?;
    let (std, pm) = prepare(data, method, gamma_wf, None)?;
    let l2 = if method.uses_lambda2() { lambda2 } else { 0.0 };
    let weights = if method.is_adaptive() {
        let l1 = lambda1.ok_or_else(|| PyValueError::new_err("adaptive paths need lambda1 for the initial fit"))?;
        let init = gril_fit(std.data(), &pm, l1, l2).map_err(err)?;
        power_weights(&std, &init, gamma)?
    } else {
        WeightVector::unit(std.p())
    };
    let sol = gril_path(std.data(), &pm, l2, &weights, &LarsOptions::default()).map_err(err)?;
    let mut intercepts = Vec::with_capacity(sol.len());
    let mut coefs = Vec::with_capacity(sol.len());
    for c in sol.coefs() {
        let (b, b0) = std.to_original(c);
        intercepts.push(b0);
        coefs.push(b.iter().copied().collect());
    }
    Ok((sol.breakpoints().to_vec(), intercepts, coefs))
}

/// Runs the simulation study. `config` is the text of a `key = value`
/// config file; keyword overrides use the same keys.
#[pyfunction]
#[pyo3(signature = (config = None, **overrides))]
fn simulate<'py>(py: Python<'py>, config: Option<&str>, overrides: Option<&Bound<'py, PyDict>>) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mut design = SimDesign::default();
    if let Some(text) = config {
        design.apply_config_str(text).map_err(err)?;
    }
    if let Some(kw) = overrides {
        for (k, v) in kw.iter() {
            let key: String = k.extract()?;
            let value = match v.extract::<Vec<String>>() {
                Ok(list) if !v.is_instance_of::<pyo3::types::PyString>() => list.join(","),
                _ => v.str()?.to_string(),
            };
            design.set(&key, &value).map_err(err)?;
        }
    }
    design.validate().map_err(err)?;
    let res = py.detach(|| run_experiment(&design)).map_err(err)?;
    res.rows
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("method", r.method.name())?;
            d.set_item("median_mse_pred", r.median_mse_pred)?;
            d.set_item("median_mse_beta", r.median_mse_beta)?;
            d.set_item("median_c", r.median_c)?;
            d.set_item("median_ic", r.median_ic)?;
            d.set_item("selection_freq", r.selection_freq)?;
            d.set_item("replications_used", r.replications_used)?;
            d.set_item("failures", r.failures)?;
            Ok(d)
        })
        .collect()
}

/// Runs one of the theory checks ("grouping", "risk", "sparsity", "re").
/// Returns `(violations, summary_text)`.
#[pyfunction]
#[pyo3(signature = (check, seed = 1, count = None))]
fn verify(py: Python<'_>, check: &str, seed: u64, count: Option<usize>) -> PyResult<(usize, String)> {
    let rows: Vec<CheckRow> = py
        .detach(|| match check {
            "grouping" => grouping_check(count.unwrap_or(100), seed),
            "re" => re_check(count.unwrap_or(20), seed),
            "risk" => {
                let mut s = RiskBoundSetup::standard(seed);
                if let Some(c) = count {
                    s.replications = c;
                }
                risk_bound_check(&s).map(|r| r.rows)
            }
            "sparsity" => {
                let mut s = SparsitySetup::standard(seed);
                if let Some(c) = count {
                    s.in_regime_target = c;
                }
                sparsity_inequality_check(&s).map(|r| r.rows)
            }
            other => Err(GrilError::InvalidParameter(format!("unknown check {other:?}"))),
        })
        .map_err(err)?;
    let bad = rows.iter().filter(|r| r.violated()).count();
    Ok((bad, summary(&rows)))
}

#[pymodule]
#[pyo3(name = "gril")]
fn gril_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyFit>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(path, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
