//! Python bindings: the main model types and pricing operations.
//!
//! ```python
//! import affine_premia as ap
//!
//! sub = ap.SubordinatorSpec.cp_exp(0.4, 2.0)
//! params = ap.ModelParams(0.127, 1.11, sub)
//! mc = ap.MeasureChange(0.0, -5.0, 0.45, 0.45)
//! state = ap.MarketState(0.0, 2.5, 0.0625)
//! ric = ap.RiccatiSolution.solve(params, mc, horizon=60.0)
//! f = ap.forward_geometric(params, mc, state, 30.0, ric)
//! ```

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use ::affine_premia as core;
use core::pricing::SpotModel;

fn err(e: core::Error) -> PyErr {
    if e.exit_code() == 2 {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn parse_model(s: &str) -> PyResult<SpotModel> {
    match s {
        "arithmetic" => Ok(SpotModel::Arithmetic),
        "geometric" => Ok(SpotModel::Geometric),
        other => Err(PyValueError::new_err(format!(
            "unknown spot model '{other}' (arithmetic|geometric)"
        ))),
    }
}

/// A Lévy subordinator specification (dirac / cp_exp / tempered_stable).
#[pyclass(name = "SubordinatorSpec", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySubordinatorSpec {
    inner: core::SubordinatorSpec,
}

#[pymethods]
impl PySubordinatorSpec {
    /// Jumps of fixed size `a`.
    #[staticmethod]
    fn dirac(a: f64) -> PyResult<Self> {
        Ok(Self { inner: core::SubordinatorSpec::dirac(a).map_err(err)? })
    }

    /// Compound Poisson with exponential jumps, Levy density c e^{-lambda z}.
    #[staticmethod]
    fn cp_exp(c: f64, lambda: f64) -> PyResult<Self> {
        Ok(Self { inner: core::SubordinatorSpec::cp_exp(c, lambda).map_err(err)? })
    }

    /// Tempered stable, Levy density c z^{-(1+alpha_ts)} e^{-lambda z}.
    #[staticmethod]
    fn tempered_stable(c: f64, lambda: f64, alpha_ts: f64) -> PyResult<Self> {
        Ok(Self {
            inner: core::SubordinatorSpec::tempered_stable(c, lambda, alpha_ts).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: core::SubordinatorSpec =
            serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        inner.validate_relaxed().map_err(err)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("spec serialises")
    }

    /// Supremum of finite exponential moments Theta_L.
    fn theta_max(&self) -> f64 {
        self.inner.theta_max()
    }

    /// Cumulant kappa_L(theta) for theta < Theta_L.
    fn cumulant(&self, theta: f64) -> PyResult<f64> {
        self.inner.cumulant(theta).map_err(err)
    }

    /// n-th cumulant derivative, n in {1, 2, 3}.
    fn cumulant_deriv(&self, theta: f64, n: u32) -> PyResult<f64> {
        self.inner.cumulant_deriv(theta, n).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("SubordinatorSpec({})", self.to_json())
    }
}

/// Measure-change parameters (theta1, theta2, beta1, beta2).
#[pyclass(name = "MeasureChange", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyMeasureChange {
    inner: core::MeasureChange,
}

#[pymethods]
impl PyMeasureChange {
    #[new]
    fn new(theta1: f64, theta2: f64, beta1: f64, beta2: f64) -> Self {
        Self { inner: core::MeasureChange::new(theta1, theta2, beta1, beta2) }
    }

    /// The historical measure (no change).
    #[staticmethod]
    fn p() -> Self {
        Self { inner: core::MeasureChange::p() }
    }

    #[getter]
    fn theta1(&self) -> f64 {
        self.inner.theta1
    }
    #[getter]
    fn theta2(&self) -> f64 {
        self.inner.theta2
    }
    #[getter]
    fn beta1(&self) -> f64 {
        self.inner.beta1
    }
    #[getter]
    fn beta2(&self) -> f64 {
        self.inner.beta2
    }

    fn __repr__(&self) -> String {
        format!(
            "MeasureChange(theta1={}, theta2={}, beta1={}, beta2={})",
            self.inner.theta1, self.inner.theta2, self.inner.beta1, self.inner.beta2
        )
    }
}

/// Model parameters under the historical measure.
#[pyclass(name = "ModelParams", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyModelParams {
    inner: core::ModelParams,
}

#[pymethods]
impl PyModelParams {
    #[new]
    fn new(alpha: f64, rho: f64, sub: &PySubordinatorSpec) -> PyResult<Self> {
        Ok(Self { inner: core::ModelParams::new(alpha, rho, sub.inner).map_err(err)? })
    }

    /// Replace both seasonal levels by constants.
    fn with_constant_seasonals(&self, level_a: f64, level_g: f64) -> PyResult<Self> {
        let inner = self
            .inner
            .clone()
            .with_seasonals(core::Seasonal::constant(level_a), core::Seasonal::constant(level_g))
            .map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }
    #[getter]
    fn rho(&self) -> f64 {
        self.inner.rho
    }

    fn __repr__(&self) -> String {
        format!("ModelParams(alpha={}, rho={}, ...)", self.inner.alpha, self.inner.rho)
    }
}

/// Market observables (t, x, sigma2).
#[pyclass(name = "MarketState", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyMarketState {
    inner: core::MarketState,
}

#[pymethods]
impl PyMarketState {
    #[new]
    fn new(t: f64, x: f64, sigma2: f64) -> PyResult<Self> {
        let inner = core::MarketState::new(t, x, sigma2);
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn t(&self) -> f64 {
        self.inner.t
    }
    #[getter]
    fn x(&self) -> f64 {
        self.inner.x
    }
    #[getter]
    fn sigma2(&self) -> f64 {
        self.inner.sigma2
    }
}

/// A solved generalised Riccati system.
#[pyclass(name = "RiccatiSolution", frozen)]
struct PyRiccatiSolution {
    inner: core::RiccatiSolution,
}

#[pymethods]
impl PyRiccatiSolution {
    /// Solve over [0, horizon] at the given local tolerance.
    #[staticmethod]
    #[pyo3(signature = (params, mc, horizon, tol = 1e-10))]
    fn solve(
        params: &PyModelParams,
        mc: &PyMeasureChange,
        horizon: f64,
        tol: f64,
    ) -> PyResult<Self> {
        Ok(Self {
            inner: core::RiccatiSolution::solve(&params.inner, &mc.inner, horizon, tol)
                .map_err(err)?,
        })
    }

    fn psi0_at(&self, t: f64) -> PyResult<f64> {
        self.inner.psi0_at(t).map_err(err)
    }
    fn psi1_at(&self, t: f64) -> PyResult<f64> {
        self.inner.psi1_at(t).map_err(err)
    }
    fn psi2_at(&self, t: f64) -> f64 {
        self.inner.psi2_at(t)
    }

    #[getter]
    fn grid(&self) -> Vec<f64> {
        self.inner.grid.clone()
    }
    #[getter]
    fn psi1(&self) -> Vec<f64> {
        self.inner.psi1.clone()
    }
    #[getter]
    fn admissible(&self) -> bool {
        self.inner.admissible
    }
    #[getter]
    fn blow_up(&self) -> Option<f64> {
        self.inner.blow_up
    }
    fn horizon(&self) -> f64 {
        self.inner.horizon()
    }
}

/// Principal branch of the Lambert W function.
#[pyfunction]
fn lambert_w0(x: f64) -> PyResult<f64> {
    core::lambert_w0(x).map_err(err)
}

/// The admissibility function Lambda(u) at explicit (theta, beta, a, rho).
#[pyfunction]
fn lambda_fn(
    sub: &PySubordinatorSpec,
    theta: f64,
    beta: f64,
    a: f64,
    rho: f64,
    u: f64,
) -> PyResult<f64> {
    core::lambda_fn(&sub.inner, theta, beta, a, rho, u).map_err(err)
}

/// Argmin of Lambda over u.
#[pyfunction]
fn u_min(sub: &PySubordinatorSpec, theta: f64, beta: f64) -> PyResult<f64> {
    core::u_min(&sub.inner, theta, beta).map_err(err)
}

/// Largest admissible speed fraction beta_m, or None when no beta works.
#[pyfunction]
fn beta_max(sub: &PySubordinatorSpec, theta: f64, a: f64, rho: f64) -> PyResult<Option<f64>> {
    Ok(core::beta_max(&sub.inner, theta, a, rho).map_err(err)?.value())
}

/// Unique zero of Lambda in (0, u_min].
#[pyfunction]
fn u_zero(sub: &PySubordinatorSpec, theta: f64, beta: f64, a: f64, rho: f64) -> PyResult<f64> {
    core::u_zero(&sub.inner, theta, beta, a, rho).map_err(err)
}

/// Membership of (theta, beta) in D_b(a): returns (member, min_lambda).
#[pyfunction]
fn in_db(
    sub: &PySubordinatorSpec,
    theta: f64,
    beta: f64,
    a: f64,
    rho: f64,
) -> PyResult<(bool, f64)> {
    let m = core::in_db(&sub.inner, theta, beta, a, rho).map_err(err)?;
    Ok((m.member, m.lambda_min))
}

/// Exponential-moment check: returns (satisfied, margin, max_upsilon, t_star).
#[pyfunction]
fn check_assumption_p(params: &PyModelParams) -> (bool, f64, f64, f64) {
    let r = core::check_assumption_p(&params.inner);
    (r.satisfied, r.margin, r.max_upsilon, r.t_star)
}

/// Arithmetic forward price F_Q(t, T).
#[pyfunction]
fn forward_arithmetic(
    params: &PyModelParams,
    mc: &PyMeasureChange,
    state: &PyMarketState,
    maturity: f64,
) -> f64 {
    core::forward_arithmetic(&params.inner, &mc.inner, &state.inner, maturity)
}

/// Arithmetic risk premium: returns (value, limit_infinity, slope_zero).
#[pyfunction]
fn premium_arithmetic(
    params: &PyModelParams,
    mc: &PyMeasureChange,
    state: &PyMarketState,
    tau: f64,
) -> (f64, f64, f64) {
    let r = core::premium_arithmetic(&params.inner, &mc.inner, &state.inner, tau);
    (r.value, r.limit_infinity, r.slope_zero)
}

/// Geometric forward price under the historical measure.
#[pyfunction]
fn forward_geometric_p(
    params: &PyModelParams,
    state: &PyMarketState,
    maturity: f64,
) -> PyResult<f64> {
    core::forward_geometric_p(&params.inner, &state.inner, maturity).map_err(err)
}

/// Geometric forward price through a solved Riccati system.
#[pyfunction]
fn forward_geometric(
    params: &PyModelParams,
    mc: &PyMeasureChange,
    state: &PyMarketState,
    maturity: f64,
    ric: &PyRiccatiSolution,
) -> PyResult<f64> {
    core::forward_geometric(&params.inner, &mc.inner, &state.inner, maturity, &ric.inner)
        .map_err(err)
}

/// Geometric risk premium F_Q - F_P in the cancellation-free form.
#[pyfunction]
fn premium_geometric(
    params: &PyModelParams,
    mc: &PyMeasureChange,
    state: &PyMarketState,
    tau: f64,
    ric: &PyRiccatiSolution,
) -> PyResult<f64> {
    core::premium_geometric(&params.inner, &mc.inner, &state.inner, tau, &ric.inner).map_err(err)
}

/// The sign diagnostic Sigma(t, tau) of the geometric premium.
#[pyfunction]
fn sigma_value(
    params: &PyModelParams,
    mc: &PyMeasureChange,
    state: &PyMarketState,
    tau: f64,
    ric: &PyRiccatiSolution,
) -> PyResult<f64> {
    core::pricing::sigma_value(&params.inner, &mc.inner, &state.inner, tau, &ric.inner)
        .map_err(err)
}

/// Swap price over the delivery period [t1, t2].
#[pyfunction]
fn swap_price(
    params: &PyModelParams,
    mc: &PyMeasureChange,
    state: &PyMarketState,
    t1: f64,
    t2: f64,
    model: &str,
) -> PyResult<f64> {
    core::swap_price(&params.inner, &mc.inner, &state.inner, t1, t2, parse_model(model)?, None)
        .map_err(err)
}

/// Premium curve on a tau grid: returns (taus, forward_q, forward_p,
/// premium, sigma) as parallel lists.
#[pyfunction]
fn premium_curve(
    params: &PyModelParams,
    mc: &PyMeasureChange,
    state: &PyMarketState,
    taus: Vec<f64>,
    model: &str,
) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
    let c = core::premium_curve(&params.inner, &mc.inner, &state.inner, &taus, parse_model(model)?)
        .map_err(err)?;
    Ok((c.taus, c.forward_q, c.forward_p, c.premium, c.sigma))
}

/// Monte Carlo forward estimate: returns (mean, std_error).
#[pyfunction]
#[pyo3(signature = (params, mc, state, maturity, model, n_paths, seed, under_p = false))]
#[allow(clippy::too_many_arguments)]
fn estimate_forward(
    params: &PyModelParams,
    mc: &PyMeasureChange,
    state: &PyMarketState,
    maturity: f64,
    model: &str,
    n_paths: usize,
    seed: u64,
    under_p: bool,
) -> PyResult<(f64, f64)> {
    let cfg = core::PathConfig::new(n_paths, seed, maturity - state.inner.t);
    let measure = if under_p { core::Measure::P } else { core::Measure::Q(mc.inner) };
    let est = core::estimate_forward(
        &params.inner,
        &measure,
        &state.inner,
        maturity,
        parse_model(model)?,
        &cfg,
    )
    .map_err(err)?;
    Ok((est.mean, est.std_error))
}

/// Monte Carlo paired-path premium estimate: returns (mean, std_error).
#[pyfunction]
#[allow(clippy::too_many_arguments)]
fn estimate_premium(
    params: &PyModelParams,
    mc: &PyMeasureChange,
    state: &PyMarketState,
    tau: f64,
    model: &str,
    n_paths: usize,
    seed: u64,
) -> PyResult<(f64, f64)> {
    let cfg = core::PathConfig::new(n_paths, seed, tau);
    let est = core::estimate_premium(
        &params.inner,
        &mc.inner,
        &state.inner,
        tau,
        parse_model(model)?,
        &cfg,
    )
    .map_err(err)?;
    Ok((est.mean, est.std_error))
}

#[pymodule]
fn affine_premia(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySubordinatorSpec>()?;
    m.add_class::<PyMeasureChange>()?;
    m.add_class::<PyModelParams>()?;
    m.add_class::<PyMarketState>()?;
    m.add_class::<PyRiccatiSolution>()?;
    m.add_function(wrap_pyfunction!(lambert_w0, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_fn, m)?)?;
    m.add_function(wrap_pyfunction!(u_min, m)?)?;
    m.add_function(wrap_pyfunction!(beta_max, m)?)?;
    m.add_function(wrap_pyfunction!(u_zero, m)?)?;
    m.add_function(wrap_pyfunction!(in_db, m)?)?;
    m.add_function(wrap_pyfunction!(check_assumption_p, m)?)?;
    m.add_function(wrap_pyfunction!(forward_arithmetic, m)?)?;
    m.add_function(wrap_pyfunction!(premium_arithmetic, m)?)?;
    m.add_function(wrap_pyfunction!(forward_geometric_p, m)?)?;
    m.add_function(wrap_pyfunction!(forward_geometric, m)?)?;
    m.add_function(wrap_pyfunction!(premium_geometric, m)?)?;
    m.add_function(wrap_pyfunction!(sigma_value, m)?)?;
    m.add_function(wrap_pyfunction!(swap_price, m)?)?;
    m.add_function(wrap_pyfunction!(premium_curve, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_forward, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_premium, m)?)?;
    Ok(())
}
