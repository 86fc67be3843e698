//! Python module `plaque_bif`: parameter sets, steady states, mode solutions
//! and bifurcation points.

use plaque_bifurcation::asymptotics;
use plaque_bifurcation::bifurcation::{self, BifurcationPoint};
use plaque_bifurcation::cli::error_kind;
use plaque_bifurcation::grid_bvp::Grid;
use plaque_bifurcation::linearized::{self, ModeSolution};
use plaque_bifurcation::params::{self, Parameters};
use plaque_bifurcation::steady_state::{self, SteadyState};
use plaque_bifurcation::Error;
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(plaque_bif, PlaqueError, PyException, "Numerical or configuration failure.");
create_exception!(plaque_bif, HypothesisError, PlaqueError, "A standing hypothesis of the model does not hold.");

fn to_py(e: Error) -> PyErr {
    let msg = format!("[{}] {e}", error_kind(&e));
    match e.root_cause() {
        Error::Hypothesis(_) | Error::Degenerate(_) => HypothesisError::new_err(msg),
        _ => PlaqueError::new_err(msg),
    }
}

fn grid(epsilon: f64, nodes: usize) -> PyResult<Grid> {
    Grid::new(epsilon, nodes).map_err(to_py)
}

const FIELDS: [&str; 16] = [
    "k1", "k2", "K1", "K2", "rho1", "rho2", "rho3", "lambda", "gamma", "D", "M0", "H0", "beta1", "beta2", "epsilon",
    "mu",
];

fn field<'a>(p: &'a mut Parameters, name: &str) -> Option<&'a mut f64> {
    Some(match name {
        "k1" => &mut p.k1,
        "k2" => &mut p.k2,
        "K1" => &mut p.big_k1,
        "K2" => &mut p.big_k2,
        "rho1" => &mut p.rho1,
        "rho2" => &mut p.rho2,
        "rho3" => &mut p.rho3,
        "lambda" => &mut p.lambda,
        "gamma" => &mut p.gamma,
        "D" => &mut p.diffusivity,
        "M0" => &mut p.m0,
        "H0" => &mut p.h0,
        "beta1" => &mut p.beta1,
        "beta2" => &mut p.beta2,
        "epsilon" => &mut p.epsilon,
        "mu" => &mut p.mu,
        _ => return None,
    })
}

/// Model parameters. `Parameters("gap", beta1=1.5)` starts from a bundled set
/// and overrides individual values by their configuration names.
#[pyclass(name = "Parameters", module = "plaque_bif", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyParameters(Parameters);

fn apply(mut p: Parameters, overrides: Option<&Bound<'_, PyDict>>) -> PyResult<Parameters> {
    if let Some(kw) = overrides {
        for (k, v) in kw.iter() {
            let key: String = k.extract()?;
            let slot = field(&mut p, &key).ok_or_else(|| PlaqueError::new_err(format!("[config] unknown parameter '{key}'")))?;
            *slot = v.extract()?;
        }
    }
    Ok(p)
}

#[pymethods]
impl PyParameters {
    #[new]
    #[pyo3(signature = (base = "reference", **overrides))]
    fn new(base: &str, overrides: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        Ok(PyParameters(apply(params::named_set(base).map_err(to_py)?, overrides)?))
    }

    /// Copy with some values replaced.
    #[pyo3(signature = (**overrides))]
    fn replace(&self, overrides: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        Ok(PyParameters(apply(self.0, overrides)?))
    }

    fn __getitem__(&self, name: &str) -> PyResult<f64> {
        let mut p = self.0;
        field(&mut p, name)
            .map(|v| *v)
            .ok_or_else(|| pyo3::exceptions::PyKeyError::new_err(name.to_string()))
    }

    fn as_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        for name in FIELDS {
            d.set_item(name, self.__getitem__(name)?)?;
        }
        Ok(d)
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.0.epsilon
    }

    #[getter]
    fn mu(&self) -> f64 {
        self.0.mu
    }

    /// Inflow level `L0` implied by `mu`.
    fn l0(&self) -> f64 {
        self.0.l0()
    }

    fn mu_c(&self) -> PyResult<f64> {
        params::compute_mu_c(&self.0).map_err(to_py)
    }

    /// `(constraint, detail)` for every violated hypothesis.
    fn validate(&self) -> Vec<(String, String)> {
        self.0.validate().into_iter().map(|v| (v.constraint.to_string(), v.detail)).collect()
    }

    /// Leading-order constants as a dict (`mu_c`, `lstar1`, `hstar1`,
    /// `fstar1`, `rho4_leading`).
    fn leading_order<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = params::leading_order_coeffs(&self.0).map_err(to_py)?;
        let out = PyDict::new(py);
        out.set_item("mu_c", d.mu_c)?;
        out.set_item("lstar1", d.lstar1)?;
        out.set_item("hstar1", d.hstar1)?;
        out.set_item("fstar1", d.fstar1)?;
        out.set_item("rho4_leading", d.rho4_leading)?;
        Ok(out)
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.0)
    }
}

#[pyclass(name = "SteadyState", module = "plaque_bif", frozen)]
struct PySteadyState(SteadyState);

#[pymethods]
impl PySteadyState {
    #[getter]
    fn r(&self) -> Vec<f64> {
        self.0.grid.nodes()
    }
    #[getter(L)]
    fn l(&self) -> Vec<f64> {
        self.0.l.values.clone()
    }
    #[getter(H)]
    fn h(&self) -> Vec<f64> {
        self.0.h.values.clone()
    }
    #[getter(F)]
    fn f(&self) -> Vec<f64> {
        self.0.f.values.clone()
    }
    #[getter]
    fn p(&self) -> Vec<f64> {
        self.0.p.values.clone()
    }
    #[getter]
    fn rho4(&self) -> f64 {
        self.0.rho4
    }
    #[getter]
    fn mu(&self) -> f64 {
        self.0.mu
    }
    #[getter]
    fn epsilon(&self) -> f64 {
        self.0.epsilon()
    }
    /// `p''(1 - eps)`
    #[getter]
    fn d2p_inner(&self) -> f64 {
        self.0.boundary.d2p
    }
    #[getter]
    fn boundary_residual(&self) -> f64 {
        self.0.boundary_residual
    }
    #[getter]
    fn interior_residual(&self) -> f64 {
        self.0.interior_residual
    }
    #[getter]
    fn newton_iterations(&self) -> usize {
        self.0.report.iterations
    }

    /// Linearized fields for angular mode `n`.
    fn mode(&self, n: u32) -> PyResult<PyMode> {
        linearized::solve_mode(n, &self.0).map(PyMode).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "SteadyState(epsilon={}, mu={}, rho4={}, nodes={})",
            self.0.epsilon(),
            self.0.mu,
            self.0.rho4,
            self.0.grid.len()
        )
    }
}

#[pyclass(name = "Mode", module = "plaque_bif", frozen)]
struct PyMode(ModeSolution);

#[pymethods]
impl PyMode {
    #[getter]
    fn n(&self) -> u32 {
        self.0.n
    }
    #[getter]
    fn eta_n(&self) -> f64 {
        self.0.eta_n
    }
    /// `dp1/dr` at the free boundary.
    #[getter]
    fn dp1n_inner(&self) -> f64 {
        self.0.dp1n_inner
    }
    #[getter]
    fn l1(&self) -> Vec<f64> {
        self.0.l1.values.clone()
    }
    #[getter]
    fn h1(&self) -> Vec<f64> {
        self.0.h1.values.clone()
    }
    #[getter]
    fn f1(&self) -> Vec<f64> {
        self.0.f1.values.clone()
    }
    #[getter]
    fn p1(&self) -> Vec<f64> {
        self.0.p1.values.clone()
    }
    #[getter]
    fn boundary_residual(&self) -> f64 {
        self.0.boundary_residual
    }

    fn __repr__(&self) -> String {
        format!("Mode(n={}, eta_n={}, dp1n_inner={})", self.0.n, self.0.eta_n, self.0.dp1n_inner)
    }
}

#[pyclass(name = "BifurcationPoint", module = "plaque_bif", frozen, get_all)]
struct PyBifurcationPoint {
    n: u32,
    epsilon: f64,
    mu_n: f64,
    residual: f64,
    slope: f64,
    prediction: f64,
    rel_dev: f64,
    bracket: (f64, f64),
    mu_tolerance: f64,
    evaluations: usize,
}

impl From<BifurcationPoint> for PyBifurcationPoint {
    fn from(b: BifurcationPoint) -> Self {
        PyBifurcationPoint {
            n: b.n,
            epsilon: b.epsilon,
            mu_n: b.mu_n,
            residual: b.residual,
            slope: b.slope,
            prediction: b.prediction,
            rel_dev: b.rel_dev,
            bracket: b.bracket,
            mu_tolerance: b.mu_tolerance,
            evaluations: b.evaluations,
        }
    }
}

#[pymethods]
impl PyBifurcationPoint {
    fn __repr__(&self) -> String {
        format!("BifurcationPoint(n={}, epsilon={}, mu_n={})", self.n, self.epsilon, self.mu_n)
    }
}

/// Names of the bundled parameter sets.
#[pyfunction]
fn named_sets() -> Vec<&'static str> {
    params::NAMED_SETS.iter().map(|(n, _)| *n).collect()
}

#[pyfunction]
#[pyo3(signature = (params, nodes = 401))]
fn solve_steady_state(py: Python<'_>, params: PyRef<'_, PyParameters>, nodes: usize) -> PyResult<PySteadyState> {
    let p = params.0;
    let g = grid(p.epsilon, nodes)?;
    py.detach(|| steady_state::solve_steady_state(&p, &g)).map(PySteadyState).map_err(to_py)
}

/// `g_n(mu) = p''(1 - eps) + dp1/dr(1 - eps)`.
#[pyfunction]
#[pyo3(signature = (n, mu, params, nodes = 401))]
fn g_n(py: Python<'_>, n: u32, mu: f64, params: PyRef<'_, PyParameters>, nodes: usize) -> PyResult<f64> {
    let p = params.0;
    let g = grid(p.epsilon, nodes)?;
    py.detach(|| bifurcation::g_n(n, mu, &p, &g)).map_err(to_py)
}

#[pyfunction]
fn predicted_mu_n(n: u32, params: PyRef<'_, PyParameters>) -> f64 {
    bifurcation::predicted_mu_n(n, &params.0)
}

#[pyfunction]
#[pyo3(signature = (n, params, nodes = 401, bracket = None))]
fn find_mu_n(
    py: Python<'_>,
    n: u32,
    params: PyRef<'_, PyParameters>,
    nodes: usize,
    bracket: Option<(f64, f64)>,
) -> PyResult<PyBifurcationPoint> {
    let p = params.0;
    let g = grid(p.epsilon, nodes)?;
    py.detach(|| bifurcation::find_mu_n(n, &p, bracket, &g)).map(Into::into).map_err(to_py)
}

/// Derivative gap between modes 1 and 0 along a decreasing epsilon ladder.
#[pyfunction]
#[pyo3(signature = (params, ladder, nodes = 401))]
fn gap_analysis<'py>(
    py: Python<'py>,
    params: PyRef<'_, PyParameters>,
    ladder: Vec<f64>,
    nodes: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let p = params.0;
    let report = py.detach(|| bifurcation::gap_analysis(&p, &ladder, nodes)).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("fitted_slope", report.fitted_slope)?;
    out.set_item("fitted_constant", report.fitted_constant)?;
    out.set_item("predicted_constant", report.predicted_constant)?;
    out.set_item("mu_gap_order", report.mu_gap_order)?;
    let rows = PyDict::new(py);
    for key in ["epsilon", "delta", "predicted_delta", "mu0", "mu1", "rho4", "slope1", "tolerance"] {
        let col: Vec<f64> = report
            .entries
            .iter()
            .map(|e| match key {
                "epsilon" => e.epsilon,
                "delta" => e.delta,
                "predicted_delta" => e.predicted_delta,
                "mu0" => e.mu0,
                "mu1" => e.mu1,
                "rho4" => e.rho4,
                "slope1" => e.slope1,
                _ => e.tolerance,
            })
            .collect();
        rows.set_item(key, col)?;
    }
    out.set_item("entries", rows)?;
    Ok(out)
}

/// `[psi1, psi1', psi1'', psi1''']` at `r`.
#[pyfunction]
fn psi1_derivatives(n: u32, eta: f64, r: f64) -> PyResult<[f64; 4]> {
    asymptotics::psi1_derivatives(n, eta, r).map_err(to_py)
}

#[pymodule]
fn plaque_bif(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyParameters>()?;
    m.add_class::<PySteadyState>()?;
    m.add_class::<PyMode>()?;
    m.add_class::<PyBifurcationPoint>()?;
    m.add("PlaqueError", m.py().get_type::<PlaqueError>())?;
    m.add("HypothesisError", m.py().get_type::<HypothesisError>())?;
    m.add_function(wrap_pyfunction!(named_sets, m)?)?;
    m.add_function(wrap_pyfunction!(solve_steady_state, m)?)?;
    m.add_function(wrap_pyfunction!(g_n, m)?)?;
    m.add_function(wrap_pyfunction!(predicted_mu_n, m)?)?;
    m.add_function(wrap_pyfunction!(find_mu_n, m)?)?;
    m.add_function(wrap_pyfunction!(gap_analysis, m)?)?;
    m.add_function(wrap_pyfunction!(psi1_derivatives, m)?)?;
    Ok(())
}
