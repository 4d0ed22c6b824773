//! Measure-change parameters and the admissibility analysis.
//!
//! The pricing measure `Q(theta1, theta2, beta1, beta2)` shifts the
//! mean-reversion levels of the factor and of the squared volatility by
//! `theta1` and `theta2` and slows their speeds by factors `(1 - beta1)` and
//! `(1 - beta2)`. Whether the geometric Riccati system has a global solution
//! is governed by the auxiliary function
//!
//! ```text
//! Lambda(u) = -rho u + a + (rho beta / kappa''(theta)) (kappa'(u + theta) - kappa'(theta))
//! ```
//!
//! on `[0, Theta_L - theta)`: it is strictly convex with a unique interior
//! minimum at `u_min`, and `(theta, beta)` belongs to the admissible set
//! `D_b(a)` exactly when that minimum is non-positive. On `D_b(a)` the
//! function has a unique zero `u_zero` in `(0, u_min]` which bounds the
//! Riccati trajectory.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{lambert_w0, roots};
use crate::subordinators::SubordinatorSpec;

/// Absolute bisection tolerance on `u` and `beta` roots.
const ROOT_TOL: f64 = 1e-12;
const ROOT_MAX_ITER: usize = 200;
/// Slack when classifying the minimum of `Lambda` as non-positive, so that
/// parameters sitting exactly on the boundary `beta = beta_m` are kept.
const MEMBERSHIP_SLACK: f64 = 1e-10;

/// Parameters of the pricing measure `Q(theta_bar, beta_bar)`.
///
/// `theta1` shifts the level of the price factor, `theta2` Esscher-tilts the
/// subordinator, `beta1`/`beta2` reduce the two mean-reversion speeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureChange {
    pub theta1: f64,
    pub theta2: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl MeasureChange {
    pub fn new(theta1: f64, theta2: f64, beta1: f64, beta2: f64) -> Self {
        Self { theta1, theta2, beta1, beta2 }
    }

    /// The historical measure: no tilt, no speed change.
    pub fn p() -> Self {
        Self::new(0.0, 0.0, 0.0, 0.0)
    }

    /// Esscher transform: level shifts only.
    pub fn is_esscher(&self) -> bool {
        self.beta1 == 0.0 && self.beta2 == 0.0
    }

    pub fn is_p(&self) -> bool {
        self.is_esscher() && self.theta1 == 0.0 && self.theta2 == 0.0
    }

    /// `theta2` must lie in `D_L = (-inf, Theta_L/2)` of the companion
    /// subordinator; both speed fractions must lie in `[0, 1]`.
    pub fn validate(&self, sub: &SubordinatorSpec) -> Result<()> {
        if !self.theta1.is_finite() {
            return Err(Error::InvalidInput(format!(
                "theta1 must be finite, got {}",
                self.theta1
            )));
        }
        if !sub.theta_in_d_l(self.theta2) {
            return Err(Error::InvalidInput(format!(
                "theta2 not in D_L: {} is not below Theta_L/2 = {}",
                self.theta2,
                sub.d_l_sup()
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..=1.0).contains(&b) {
                return Err(Error::InvalidInput(format!(
                    "{name} must lie in [0, 1], got {b}"
                )));
            }
        }
        Ok(())
    }
}

/// Deterministic seasonal level, JSON-tagged as
/// `{"kind":"constant","value":...}` or
/// `{"kind":"sin","level":...,"amplitude":...,"period_days":...}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Seasonal {
    Constant { value: f64 },
    Sin { level: f64, amplitude: f64, period_days: f64 },
}

impl Seasonal {
    pub fn constant(value: f64) -> Self {
        Seasonal::Constant { value }
    }

    pub fn at(&self, t: f64) -> f64 {
        match *self {
            Seasonal::Constant { value } => value,
            Seasonal::Sin { level, amplitude, period_days } => {
                level + amplitude * (2.0 * std::f64::consts::PI * t / period_days).sin()
            }
        }
    }

    fn min_value(&self) -> f64 {
        match *self {
            Seasonal::Constant { value } => value,
            Seasonal::Sin { level, amplitude, .. } => level - amplitude.abs(),
        }
    }
}

/// Model parameters under the historical measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Mean-reversion speed of the price factor, per day.
    pub alpha: f64,
    /// Mean-reversion speed of the squared volatility, per day.
    pub rho: f64,
    pub sub: SubordinatorSpec,
    /// Seasonal level of the arithmetic spot.
    pub seasonal_a: Seasonal,
    /// Seasonal level of the geometric spot; must be strictly positive.
    pub seasonal_g: Seasonal,
}

impl ModelParams {
    /// Constant seasonals: 0 for the arithmetic level, 1 for the geometric.
    pub fn new(alpha: f64, rho: f64, sub: SubordinatorSpec) -> Result<Self> {
        let p = Self {
            alpha,
            rho,
            sub,
            seasonal_a: Seasonal::constant(0.0),
            seasonal_g: Seasonal::constant(1.0),
        };
        p.validate(true)?;
        Ok(p)
    }

    pub fn with_seasonals(mut self, seasonal_a: Seasonal, seasonal_g: Seasonal) -> Result<Self> {
        self.seasonal_a = seasonal_a;
        self.seasonal_g = seasonal_g;
        self.validate(true)?;
        Ok(self)
    }

    pub fn validate(&self, strict: bool) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidInput(format!(
                "alpha must be > 0, got {}",
                self.alpha
            )));
        }
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(Error::InvalidInput(format!("rho must be > 0, got {}", self.rho)));
        }
        if strict {
            self.sub.validate_strict()?;
        } else {
            self.sub.validate_relaxed()?;
        }
        if self.seasonal_g.min_value() <= 0.0 {
            return Err(Error::InvalidInput(
                "seasonal_g must be strictly positive everywhere".to_string(),
            ));
        }
        Ok(())
    }
}

/// Current market observables `(t, X(t), sigma^2(t))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketState {
    /// Current time in days.
    pub t: f64,
    /// Current factor value.
    pub x: f64,
    /// Current squared volatility (>= 0; zero only for degenerate setups).
    pub sigma2: f64,
}

impl MarketState {
    pub fn new(t: f64, x: f64, sigma2: f64) -> Self {
        Self { t, x, sigma2 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t >= 0.0) {
            return Err(Error::InvalidInput(format!("t must be >= 0, got {}", self.t)));
        }
        if !self.x.is_finite() {
            return Err(Error::InvalidInput(format!("x must be finite, got {}", self.x)));
        }
        if !(self.sigma2 >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "sigma2 must be >= 0, got {}",
                self.sigma2
            )));
        }
        Ok(())
    }
}

/// The auxiliary function `Lambda(u)` controlling admissibility.
///
/// `rho` is passed explicitly so the analysis is reusable for any speed.
/// Requires `theta` in `D_L`, `beta` in `[0, 1)`, `u` in `[0, Theta_L - theta)`.
pub fn lambda_fn(
    sub: &SubordinatorSpec,
    theta: f64,
    beta: f64,
    a: f64,
    rho: f64,
    u: f64,
) -> Result<f64> {
    if !sub.theta_in_d_l(theta) {
        return Err(Error::Domain(format!(
            "theta = {theta} not in D_L (sup = {})",
            sub.d_l_sup()
        )));
    }
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::Domain(format!("beta must lie in [0, 1), got {beta}")));
    }
    if !(u >= 0.0) || u + theta >= sub.theta_max() {
        return Err(Error::Domain(format!(
            "u = {u} outside [0, Theta_L - theta) = [0, {})",
            sub.theta_max() - theta
        )));
    }
    let linear = -rho * u + a;
    if beta == 0.0 || sub.is_null() {
        return Ok(linear);
    }
    let k2 = sub.cumulant_deriv(theta, 2)?;
    let dk1 = sub.cumulant_deriv(u + theta, 1)? - sub.cumulant_deriv(theta, 1)?;
    Ok(linear + rho * beta / k2 * dk1)
}

/// Location `u_min(theta, beta)` of the unique global minimum of `Lambda`:
/// the solution of `kappa''(u + theta) = kappa''(theta) / beta`, in closed
/// form for each family.
pub fn u_min(sub: &SubordinatorSpec, theta: f64, beta: f64) -> Result<f64> {
    if !(0.0 < beta && beta < 1.0) {
        return Err(Error::Domain(format!(
            "u_min is defined for beta in (0, 1), got {beta}"
        )));
    }
    if !sub.theta_in_d_l(theta) {
        return Err(Error::Domain(format!(
            "theta = {theta} not in D_L (sup = {})",
            sub.d_l_sup()
        )));
    }
    match *sub {
        SubordinatorSpec::Dirac { a } => Ok(-beta.ln() / a),
        SubordinatorSpec::CpExp { c, lambda } => {
            if c == 0.0 {
                return Err(Error::Domain("u_min undefined for the null subordinator".into()));
            }
            // kappa'' ~ (lambda - theta)^{-3}
            Ok((lambda - theta) * (1.0 - beta.powf(1.0 / 3.0)))
        }
        SubordinatorSpec::TemperedStable { c, lambda, alpha_ts } => {
            if c == 0.0 {
                return Err(Error::Domain("u_min undefined for the null subordinator".into()));
            }
            // kappa'' ~ (lambda - theta)^{alpha - 2}
            Ok((lambda - theta) * (1.0 - beta.powf(1.0 / (2.0 - alpha_ts))))
        }
    }
}

/// Result of [`beta_max`]: either the unique admissibility boundary
/// `beta_m` in `(0, 1)`, or the certificate that no speed fraction is
/// admissible at this tilt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaMax {
    Admissible(f64),
    NoAdmissibleBeta,
}

impl BetaMax {
    pub fn value(&self) -> Option<f64> {
        match self {
            BetaMax::Admissible(b) => Some(*b),
            BetaMax::NoAdmissibleBeta => None,
        }
    }
}

fn lambda_at_min(sub: &SubordinatorSpec, theta: f64, beta: f64, a: f64, rho: f64) -> Result<f64> {
    let um = u_min(sub, theta, beta)?;
    lambda_fn(sub, theta, beta, a, rho, um)
}

/// The largest admissible speed fraction `beta_m` for a given tilt:
/// the unique root of `Lambda(u_min(beta)) = 0` in `(0, 1)` when
/// `theta < Theta_L - a/rho`, and `NoAdmissibleBeta` otherwise.
///
/// Closed forms: Lambert W for the Dirac family, the trigonometric real
/// root of the reduced cubic for compound-Poisson-exponential; generic
/// bisection elsewhere (the Cardano radical form of the cubic root is only
/// real when the reduced coefficient exceeds 2, which cannot happen here,
/// so the trigonometric branch is the live one).
pub fn beta_max(sub: &SubordinatorSpec, theta: f64, a: f64, rho: f64) -> Result<BetaMax> {
    if !(a > 0.0) {
        return Err(Error::Domain(format!("beta_max requires a > 0, got {a}")));
    }
    if !sub.theta_in_d_l(theta) {
        return Err(Error::Domain(format!(
            "theta = {theta} not in D_L (sup = {})",
            sub.d_l_sup()
        )));
    }
    if sub.is_null() {
        return Err(Error::Domain("beta_max undefined for the null subordinator".into()));
    }
    if theta >= sub.theta_max() - a / rho {
        return Ok(BetaMax::NoAdmissibleBeta);
    }
    match *sub {
        SubordinatorSpec::Dirac { a: jump } => {
            // a + (rho/jump)(ln beta + 1 - beta) = 0
            // => beta_m = -W0(-exp(-(1 + a jump / rho)))
            let w = lambert_w0(-(-(1.0 + a * jump / rho)).exp())?;
            Ok(BetaMax::Admissible(-w))
        }
        SubordinatorSpec::CpExp { lambda, .. } => {
            // z^3 - 3z + a_c = 0 with z = beta^{1/3},
            // a_c = 2 - 2a/(rho (lambda - theta)) in (0, 2) on this branch.
            let a_c = 2.0 - 2.0 * a / (rho * (lambda - theta));
            if a_c > 0.0 && a_c < 2.0 {
                let z = 2.0 * (((-a_c / 2.0).acos()) / 3.0 - 2.0 * std::f64::consts::PI / 3.0).cos();
                Ok(BetaMax::Admissible(z * z * z))
            } else {
                beta_max_bisect(sub, theta, a, rho)
            }
        }
        SubordinatorSpec::TemperedStable { .. } => beta_max_bisect(sub, theta, a, rho),
    }
}

/// Generic route: bisection on `beta -> Lambda(u_min(beta))`, which moves
/// from negative (beta near 0, when `theta < Theta_L - a/rho`) to `a > 0`
/// (beta near 1).
pub fn beta_max_bisect(sub: &SubordinatorSpec, theta: f64, a: f64, rho: f64) -> Result<BetaMax> {
    if theta >= sub.theta_max() - a / rho {
        return Ok(BetaMax::NoAdmissibleBeta);
    }
    let g = |b: f64| lambda_at_min(sub, theta, b, a, rho).unwrap_or(f64::NAN);
    let root = roots::bisect(g, 1e-12, 1.0 - 1e-12, ROOT_TOL, ROOT_MAX_ITER)?;
    Ok(BetaMax::Admissible(root))
}

/// Diagnostics returned by [`in_db`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbMembership {
    pub member: bool,
    /// Minimum value of `Lambda` over its domain. For `beta = 0` the
    /// function is linear and this is its infimum at the right edge
    /// (`-inf` when `Theta_L` is infinite).
    pub lambda_min: f64,
    /// Argmin `u_min(theta, beta)`; `None` in the linear case `beta = 0`.
    pub u_min: Option<f64>,
}

/// Membership test for `D_b(a)`: true iff `min Lambda <= 0`. `beta = 0`
/// is handled as the linear limit, where membership reduces to
/// `a / rho < Theta_L - theta`.
pub fn in_db(
    sub: &SubordinatorSpec,
    theta: f64,
    beta: f64,
    a: f64,
    rho: f64,
) -> Result<DbMembership> {
    if !sub.theta_in_d_l(theta) {
        return Err(Error::Domain(format!(
            "theta = {theta} not in D_L (sup = {})",
            sub.d_l_sup()
        )));
    }
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::Domain(format!("beta must lie in [0, 1), got {beta}")));
    }
    if beta == 0.0 || sub.is_null() {
        let member = a / rho < sub.theta_max() - theta;
        let lambda_min = if sub.theta_max().is_finite() {
            a - rho * (sub.theta_max() - theta)
        } else {
            f64::NEG_INFINITY
        };
        return Ok(DbMembership { member, lambda_min, u_min: None });
    }
    let um = u_min(sub, theta, beta)?;
    let lmin = lambda_fn(sub, theta, beta, a, rho, um)?;
    Ok(DbMembership { member: lmin <= MEMBERSHIP_SLACK, lambda_min: lmin, u_min: Some(um) })
}

/// The unique zero `u_zero(theta, beta)` of `Lambda` in `(0, u_min]`,
/// by bisection. Requires `(theta, beta)` in `D_b(a)`; at `beta = 0` it is
/// the linear root `a / rho`, and at `beta = beta_m` it collapses onto the
/// minimum.
pub fn u_zero(sub: &SubordinatorSpec, theta: f64, beta: f64, a: f64, rho: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::Domain(format!("u_zero requires a > 0, got {a}")));
    }
    let membership = in_db(sub, theta, beta, a, rho)?;
    if !membership.member {
        return Err(Error::NotInDb { theta, beta, a, lambda_min: membership.lambda_min });
    }
    if beta == 0.0 || sub.is_null() {
        return Ok(a / rho);
    }
    let um = membership.u_min.expect("interior beta has a minimum");
    if membership.lambda_min > 0.0 {
        // Within slack of the boundary beta = beta_m: zero and minimum coincide.
        return Ok(um);
    }
    let f = |u: f64| lambda_fn(sub, theta, beta, a, rho, u).unwrap_or(f64::NAN);
    roots::bisect(f, 0.0, um, ROOT_TOL, ROOT_MAX_ITER)
}

/// Independent route to `u_zero` for the compound-Poisson-exponential
/// family: the substitution `y = (lambda - theta)/(lambda - theta - u)`
/// turns `Lambda(u) = 0` into the cubic
/// `beta y^3 - (a_c + beta) y + 2 = 0`, whose relevant root lies in
/// `(1, beta^{-1/3}]`.
pub fn u_zero_cp_cubic(
    sub: &SubordinatorSpec,
    theta: f64,
    beta: f64,
    a: f64,
    rho: f64,
) -> Result<f64> {
    let SubordinatorSpec::CpExp { c, lambda } = *sub else {
        return Err(Error::InvalidInput(
            "cubic route applies to the cp_exp family only".to_string(),
        ));
    };
    if c == 0.0 {
        return Err(Error::Domain("null subordinator".into()));
    }
    if !(0.0 < beta && beta < 1.0) {
        return Err(Error::Domain(format!("cubic route needs beta in (0, 1), got {beta}")));
    }
    let a_c = 2.0 - 2.0 * a / (rho * (lambda - theta));
    let y_max = beta.powf(-1.0 / 3.0);
    let candidates = roots::solve_cubic_real(beta, 0.0, -(a_c + beta), 2.0);
    let y = candidates
        .into_iter()
        .find(|&y| y > 1.0 && y <= y_max * (1.0 + 1e-9))
        .ok_or_else(|| Error::NotInDb {
            theta,
            beta,
            a,
            lambda_min: f64::NAN,
        })?;
    Ok((lambda - theta) * (1.0 - 1.0 / y))
}

/// The transient variance load `Upsilon(t) = e^{-rho t} (1 - e^{-(2 alpha - rho) t}) / (2 (2 alpha - rho))`
/// with the removable `2 alpha = rho` case handled by its limit.
pub fn upsilon(alpha: f64, rho: f64, t: f64) -> f64 {
    let x = 2.0 * alpha - rho;
    if x.abs() < 1e-12 * (2.0 * alpha + rho) {
        0.5 * t * (-rho * t).exp()
    } else {
        (-rho * t).exp() * (-(-x * t).exp_m1()) / (2.0 * x)
    }
}

/// Maximiser and maximum of `Upsilon` over `t > 0`, in closed form:
/// `t* = -ln(rho / (2 alpha)) / (2 alpha - rho)` and
/// `max = (1 / (2 rho)) (rho / (2 alpha))^{1 / (1 - rho / (2 alpha))}`.
pub fn upsilon_max(alpha: f64, rho: f64) -> (f64, f64) {
    let r = rho / (2.0 * alpha);
    if (r - 1.0).abs() < 1e-9 {
        // Limit r -> 1: maximum exp(-1) / (2 rho) at t = 1/rho.
        return (1.0 / rho, (-1.0_f64).exp() / (2.0 * rho));
    }
    let t_star = -r.ln() / (2.0 * alpha - rho);
    let max = 1.0 / (2.0 * rho) * r.powf(1.0 / (1.0 - r));
    (t_star, max)
}

/// Report produced by [`check_assumption_p`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssumptionP {
    pub satisfied: bool,
    /// `Theta_L - max Upsilon`; positive iff the assumption holds
    /// (infinite when `Theta_L` is).
    pub margin: f64,
    pub max_upsilon: f64,
    pub t_star: f64,
}

/// Exponential-moment condition for finiteness of the geometric forward
/// under the historical measure at every horizon: `max_t Upsilon(t) < Theta_L`.
pub fn check_assumption_p(params: &ModelParams) -> AssumptionP {
    let (t_star, max_upsilon) = upsilon_max(params.alpha, params.rho);
    let theta_l = params.sub.theta_max();
    let margin = theta_l - max_upsilon;
    AssumptionP { satisfied: max_upsilon < theta_l, margin, max_upsilon, t_star }
}
