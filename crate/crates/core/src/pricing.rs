//! Forward prices, swap prices and risk premia.
//!
//! Arithmetic spot `S = Lambda_a + X`: the forward is an affine function of
//! `X(t)` alone, with the closed form
//!
//! ```text
//! F_Q(t,T) = Lambda_a(T) + X(t) e^{-alpha(1-beta1) tau}
//!            + theta1 (1 - e^{-alpha(1-beta1) tau}) / (alpha(1-beta1)),
//! ```
//!
//! so the volatility parameters `(theta2, beta2)` are unspanned: they never
//! enter the curve.
//!
//! Geometric spot `S = Lambda_g exp(X)`: under the historical measure the
//! forward has a closed form built from the variance load `Upsilon`; under a
//! general measure change it is priced through the Riccati transform. The
//! risk premium is evaluated in the cancellation-free form
//! `F_P expm1(Sigma)`, where `Sigma` is the exponent gap between the two
//! measures and carries the sign of the premium.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admissibility::{upsilon, upsilon_max, MarketState, MeasureChange, ModelParams};
use crate::error::{Error, Result};
use crate::numerics::expm1_ratio;
use crate::numerics::quadrature;
use crate::riccati::{long_run, psi1_closed_esscher, RiccatiSolution};

/// Quadrature tolerances for exponent integrals and swap averaging.
const QUAD_ABS_TOL: f64 = 1e-12;
const QUAD_REL_TOL: f64 = 1e-10;

/// Which spot model a price refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpotModel {
    Arithmetic,
    Geometric,
}

/// Arithmetic forward price `F_Q(t, T)`.
///
/// `beta1 = 1` is admitted through its limit `Lambda_a(T) + X + theta1 tau`.
pub fn forward_arithmetic(
    params: &ModelParams,
    mc: &MeasureChange,
    state: &MarketState,
    maturity: f64,
) -> f64 {
    let tau = maturity - state.t;
    let alpha_bar = params.alpha * (1.0 - mc.beta1);
    params.seasonal_a.at(maturity)
        + state.x * (-alpha_bar * tau).exp()
        + mc.theta1 * expm1_ratio(alpha_bar, tau)
}

/// Arithmetic risk premium with its two sign diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArithmeticPremium {
    pub value: f64,
    /// `tau -> inf` limit `theta1 / (alpha (1 - beta1))`.
    pub limit_infinity: f64,
    /// Slope at `tau = 0`: `X(t) alpha beta1 + theta1`.
    pub slope_zero: f64,
}

/// Arithmetic risk premium
/// `X(t) e^{-alpha tau} (e^{alpha beta1 tau} - 1) + theta1 (1 - e^{-alpha(1-beta1) tau}) / (alpha(1-beta1))`.
///
/// Identically zero when `theta1 = beta1 = 0`, whatever the volatility
/// parameters.
pub fn premium_arithmetic(
    params: &ModelParams,
    mc: &MeasureChange,
    state: &MarketState,
    tau: f64,
) -> ArithmeticPremium {
    let alpha = params.alpha;
    let alpha_bar = alpha * (1.0 - mc.beta1);
    // e^{-alpha tau}(e^{alpha beta1 tau} - 1): switch to the difference of
    // the two decaying exponentials once the tilt factor would overflow.
    let stochastic = if alpha * mc.beta1 * tau < 700.0 {
        state.x * (-alpha * tau).exp() * (alpha * mc.beta1 * tau).exp_m1()
    } else {
        state.x * ((-alpha_bar * tau).exp() - (-alpha * tau).exp())
    };
    let value = stochastic + mc.theta1 * expm1_ratio(alpha_bar, tau);
    let limit_infinity = if mc.beta1 < 1.0 {
        mc.theta1 / alpha_bar
    } else if mc.theta1 == 0.0 {
        // beta1 = 1 freezes the factor: the premium tends to X(t).
        state.x
    } else {
        mc.theta1.signum() * f64::INFINITY
    };
    let slope_zero = state.x * alpha * mc.beta1 + mc.theta1;
    ArithmeticPremium { value, limit_infinity, slope_zero }
}

/// Whether `E_P[S(T)]` stays finite for every maturity up to `horizon`:
/// `sup_{s <= horizon} Upsilon(s) < Theta_L`.
pub fn check_finiteness_p(params: &ModelParams, horizon: f64) -> bool {
    let theta_l = params.sub.theta_max();
    if theta_l.is_infinite() {
        return true;
    }
    let (t_star, max) = upsilon_max(params.alpha, params.rho);
    let sup = if t_star <= horizon { max } else { upsilon(params.alpha, params.rho, horizon) };
    sup < theta_l
}

/// The historical-measure exponent integral
/// `int_0^tau kappa_L(Upsilon(s)) ds`.
pub fn psi0_p(params: &ModelParams, tau: f64) -> Result<f64> {
    let sub = params.sub;
    let alpha = params.alpha;
    let rho = params.rho;
    quadrature::adaptive(
        |s| sub.cumulant(upsilon(alpha, rho, s)).unwrap_or(f64::NAN),
        0.0,
        tau,
        QUAD_ABS_TOL,
        QUAD_REL_TOL,
    )
}

/// Geometric forward under the historical measure:
/// `Lambda_g(T) exp(X e^{-alpha tau} + sigma^2 Upsilon(tau) + int_0^tau kappa_L(Upsilon) ds)`.
pub fn forward_geometric_p(params: &ModelParams, state: &MarketState, maturity: f64) -> Result<f64> {
    let tau = maturity - state.t;
    if tau < 0.0 {
        return Err(Error::InvalidInput(format!(
            "maturity {maturity} precedes current time {}",
            state.t
        )));
    }
    if !check_finiteness_p(params, tau) {
        return Err(Error::NotFinite(format!(
            "E_P[S(T)] is infinite: sup Upsilon >= Theta_L = {}",
            params.sub.theta_max()
        )));
    }
    let exponent = state.x * (-params.alpha * tau).exp()
        + state.sigma2 * upsilon(params.alpha, params.rho, tau)
        + psi0_p(params, tau)?;
    Ok(params.seasonal_g.at(maturity) * exponent.exp())
}

/// Geometric forward under `Q` through the Riccati transform:
/// `Lambda_g(T) exp(Psi0(tau) + Psi1(tau) sigma^2(t) + Psi2(tau) X(t))`.
pub fn forward_geometric(
    params: &ModelParams,
    mc: &MeasureChange,
    state: &MarketState,
    maturity: f64,
    ric: &RiccatiSolution,
) -> Result<f64> {
    if !ric.matches(params, mc) {
        return Err(Error::InvalidInput(
            "Riccati solution was produced for different parameters".to_string(),
        ));
    }
    if let Some(tb) = ric.blow_up {
        return Err(Error::BlowUpUpstream(tb));
    }
    let tau = maturity - state.t;
    if tau < 0.0 {
        return Err(Error::InvalidInput(format!(
            "maturity {maturity} precedes current time {}",
            state.t
        )));
    }
    let exponent =
        ric.psi0_at(tau)? + ric.psi1_at(tau)? * state.sigma2 + ric.psi2_at(tau) * state.x;
    Ok(params.seasonal_g.at(maturity) * exponent.exp())
}

/// The exponent gap whose sign is the sign of the geometric premium:
/// `Sigma(t, tau) = (Psi0 - Psi0_P)(tau) + (Psi1 - Upsilon)(tau) sigma^2 + (Psi2 - e^{-alpha tau}) X`.
pub fn sigma_value(
    params: &ModelParams,
    mc: &MeasureChange,
    state: &MarketState,
    tau: f64,
    ric: &RiccatiSolution,
) -> Result<f64> {
    if !ric.matches(params, mc) {
        return Err(Error::InvalidInput(
            "Riccati solution was produced for different parameters".to_string(),
        ));
    }
    if let Some(tb) = ric.blow_up {
        return Err(Error::BlowUpUpstream(tb));
    }
    let d0 = ric.psi0_at(tau)? - psi0_p(params, tau)?;
    let d1 = ric.psi1_at(tau)? - psi1_closed_esscher(params, tau);
    let d2 = ric.psi2_at(tau) - (-params.alpha * tau).exp();
    Ok(d0 + d1 * state.sigma2 + d2 * state.x)
}

/// Sign diagnostics of the geometric premium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaDiagnostics {
    pub sigma_value: f64,
    /// `tau -> inf` limit of `Sigma`: difference of the two `Psi0` limits.
    pub limit_infinity: f64,
    /// Slope of `Sigma` at `tau = 0`: `theta1 + alpha beta1 X(t)`.
    pub slope_zero: f64,
}

/// `Sigma` at `tau` together with its short- and long-end limits. The
/// long-end limit solves both long-run problems, so prefer caching it when
/// sweeping `tau` (as [`premium_curve`] does).
pub fn sigma_diagnostics(
    params: &ModelParams,
    mc: &MeasureChange,
    state: &MarketState,
    tau: f64,
    ric: &RiccatiSolution,
) -> Result<SigmaDiagnostics> {
    let sigma = sigma_value(params, mc, state, tau, ric)?;
    let limit = sigma_limit_infinity(params, mc)?;
    Ok(SigmaDiagnostics {
        sigma_value: sigma,
        limit_infinity: limit,
        slope_zero: mc.theta1 + params.alpha * mc.beta1 * state.x,
    })
}

/// Long-end limit of `Sigma`: `psi0_infinity` under `Q` minus under `P`.
pub fn sigma_limit_infinity(params: &ModelParams, mc: &MeasureChange) -> Result<f64> {
    let lr_q = long_run(params, mc, crate::riccati::DEFAULT_TOL)?;
    let lr_p = long_run(params, &MeasureChange::p(), crate::riccati::DEFAULT_TOL)?;
    Ok(lr_q.psi0_infinity - lr_p.psi0_infinity)
}

/// Geometric risk premium `F_Q - F_P`, evaluated as `F_P expm1(Sigma)` to
/// avoid cancellation when the two measures are close.
pub fn premium_geometric(
    params: &ModelParams,
    mc: &MeasureChange,
    state: &MarketState,
    tau: f64,
    ric: &RiccatiSolution,
) -> Result<f64> {
    let fp = forward_geometric_p(params, state, state.t + tau)?;
    let sigma = sigma_value(params, mc, state, tau, ric)?;
    Ok(fp * sigma.exp_m1())
}

/// Swap price over the delivery period `[t1, t2]`:
/// the quadrature average `(1/(t2-t1)) int_{t1}^{t2} F_Q(t, T) dT`.
///
/// Geometric pricing needs a Riccati solution covering `t2 - state.t`; one
/// is solved on the fly when `ric` is `None`.
pub fn swap_price(
    params: &ModelParams,
    mc: &MeasureChange,
    state: &MarketState,
    t1: f64,
    t2: f64,
    model: SpotModel,
    ric: Option<&RiccatiSolution>,
) -> Result<f64> {
    if !(state.t <= t1 && t1 < t2) {
        return Err(Error::InvalidInput(format!(
            "delivery period must satisfy t <= t1 < t2, got t = {}, t1 = {t1}, t2 = {t2}",
            state.t
        )));
    }
    let avg = match model {
        SpotModel::Arithmetic => quadrature::adaptive(
            |maturity| forward_arithmetic(params, mc, state, maturity),
            t1,
            t2,
            QUAD_ABS_TOL,
            QUAD_REL_TOL,
        )?,
        SpotModel::Geometric => {
            let owned;
            let ric = match ric {
                Some(r) => r,
                None => {
                    owned = RiccatiSolution::solve(
                        params,
                        mc,
                        t2 - state.t + 1.0,
                        crate::riccati::DEFAULT_TOL,
                    )?;
                    &owned
                }
            };
            let value = quadrature::adaptive(
                |maturity| {
                    forward_geometric(params, mc, state, maturity, ric).unwrap_or(f64::NAN)
                },
                t1,
                t2,
                QUAD_ABS_TOL,
                QUAD_REL_TOL,
            )?;
            if !value.is_finite() {
                return Err(Error::NotFinite(
                    "geometric forward failed inside the delivery average".to_string(),
                ));
            }
            value
        }
    };
    Ok(avg / (t2 - t1))
}

/// A premium term structure in the time-to-maturity parametrisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PremiumCurve {
    pub taus: Vec<f64>,
    pub forward_q: Vec<f64>,
    pub forward_p: Vec<f64>,
    pub premium: Vec<f64>,
    /// Sign diagnostic per point: `Sigma(t, tau)` for the geometric model;
    /// for the arithmetic model the premium is its own diagnostic and is
    /// repeated here.
    pub sigma: Vec<f64>,
    /// `(short-end slope, long-end limit)` of the premium diagnostics.
    pub sign_limits: (f64, f64),
}

/// Evaluate forwards and premium on a `tau` grid.
///
/// Pure per point; the sweep parallelises across the grid. For the
/// geometric model one Riccati solve and one pair of long-run limits are
/// shared by all points.
pub fn premium_curve(
    params: &ModelParams,
    mc: &MeasureChange,
    state: &MarketState,
    taus: &[f64],
    model: SpotModel,
) -> Result<PremiumCurve> {
    if taus.iter().any(|&t| t < 0.0) {
        return Err(Error::InvalidInput("tau grid must be non-negative".to_string()));
    }
    match model {
        SpotModel::Arithmetic => {
            let p_measure = MeasureChange::p();
            let rows: Vec<(f64, f64, f64)> = taus
                .par_iter()
                .map(|&tau| {
                    let maturity = state.t + tau;
                    let fq = forward_arithmetic(params, mc, state, maturity);
                    let fp = forward_arithmetic(params, &p_measure, state, maturity);
                    let prem = premium_arithmetic(params, mc, state, tau).value;
                    (fq, fp, prem)
                })
                .collect();
            let diag = premium_arithmetic(params, mc, state, 0.0);
            Ok(PremiumCurve {
                taus: taus.to_vec(),
                forward_q: rows.iter().map(|r| r.0).collect(),
                forward_p: rows.iter().map(|r| r.1).collect(),
                premium: rows.iter().map(|r| r.2).collect(),
                sigma: rows.iter().map(|r| r.2).collect(),
                sign_limits: (diag.slope_zero, diag.limit_infinity),
            })
        }
        SpotModel::Geometric => {
            let horizon = taus.iter().cloned().fold(1.0_f64, f64::max) + 1.0;
            let ric = RiccatiSolution::solve(params, mc, horizon, crate::riccati::DEFAULT_TOL)?;
            if let Some(tb) = ric.blow_up {
                return Err(Error::BlowUpUpstream(tb));
            }
            let rows: Vec<Result<(f64, f64, f64, f64)>> = taus
                .par_iter()
                .map(|&tau| {
                    let maturity = state.t + tau;
                    let fq = forward_geometric(params, mc, state, maturity, &ric)?;
                    let fp = forward_geometric_p(params, state, maturity)?;
                    let sig = sigma_value(params, mc, state, tau, &ric)?;
                    Ok((fq, fp, fp * sig.exp_m1(), sig))
                })
                .collect();
            let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
            let limit = sigma_limit_infinity(params, mc)?;
            Ok(PremiumCurve {
                taus: taus.to_vec(),
                forward_q: rows.iter().map(|r| r.0).collect(),
                forward_p: rows.iter().map(|r| r.1).collect(),
                premium: rows.iter().map(|r| r.2).collect(),
                sigma: rows.iter().map(|r| r.3).collect(),
                sign_limits: (
                    mc.theta1 + params.alpha * mc.beta1 * state.x,
                    limit,
                ),
            })
        }
    }
}

/// Daily grid `0, 1, ..., n-1` days; the plots' default is 361 points on
/// `[0, 360]`.
pub fn daily_grid(points: usize, max_tau: f64) -> Vec<f64> {
    if points <= 1 {
        return vec![0.0];
    }
    (0..points).map(|k| max_tau * k as f64 / (points - 1) as f64).collect()
}
