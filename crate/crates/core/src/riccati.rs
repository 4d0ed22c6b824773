//! The generalised Riccati system behind the exponential-affine transform
//! `E_Q[exp(X(T)) | F_t] = exp(Psi0(tau) + Psi1(tau) sigma^2(t) + Psi2(tau) X(t))`.
//!
//! `Psi2` is a plain exponential. Substituting it reduces the system to one
//! non-autonomous scalar ODE for `Psi1`,
//!
//! ```text
//! Psi1' = -rho Psi1 + exp(-2 alpha (1-beta1) t) / 2
//!         + (rho beta2 / kappa''(theta2)) (kappa'(Psi1 + theta2) - kappa'(theta2)),
//! Psi1(0) = 0,
//! ```
//!
//! integrated here with an adaptive Dormand-Prince 5(4) pair and dense
//! output. `Psi0` is a quadrature of `theta1 Psi2 + kappa(Psi1 + theta2)
//! - kappa(theta2)` along that output (the `theta1` part in closed form).
//!
//! Membership of `(theta2, beta2)` in `D_b(1/2)` is sufficient for a global
//! bounded solution but not necessary, so the solver always runs and relies
//! on a blow-up guard: integration stops, with the time recorded, if `Psi1`
//! crosses a configurable cap or approaches the cumulant domain edge
//! `Theta_L - theta2`.

use crate::admissibility::{in_db, upsilon, MeasureChange, ModelParams};
use crate::error::{Error, Result};
use crate::numerics::ode::{dopri5, OdeOptions, OdeSolution, Stop};
use crate::numerics::quadrature::kronrod15;
use crate::numerics::{expm1_ratio, pairwise_sum};

/// Default local tolerance of the Riccati integration.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Default cap on `Psi1` beyond which the trajectory is declared blown up.
/// Bounded solutions stay below `u_zero(theta2, beta2) < Theta_L - theta2`,
/// orders of magnitude under this; the cap also keeps `kappa'` evaluations
/// clear of exponential overflow for the Dirac family.
pub const DEFAULT_PSI1_CAP: f64 = 600.0;
/// Stop when `Psi1 + theta2` gets this close to `Theta_L`.
const BOUNDARY_GAP: f64 = 1e-6;

/// `Psi2(t) = exp(-alpha (1 - beta1) t)`, exactly.
pub fn psi2_closed(params: &ModelParams, mc: &MeasureChange, t: f64) -> f64 {
    (-params.alpha * (1.0 - mc.beta1) * t).exp()
}

/// Closed form of `Psi1` in the Esscher case `beta_bar = (0, 0)`:
/// `exp(-rho t)(1 - exp(-(2 alpha - rho) t)) / (2 (2 alpha - rho))`,
/// independent of the tilt; the removable `2 alpha = rho` case is the limit
/// `t exp(-rho t) / 2`. Also the transient variance load `Upsilon`.
pub fn psi1_closed_esscher(params: &ModelParams, t: f64) -> f64 {
    upsilon(params.alpha, params.rho, t)
}

/// Numerical solution of the scalar `Psi1` equation with dense output.
#[derive(Debug, Clone)]
pub struct Psi1Solution {
    sol: OdeSolution,
    /// Time at which the blow-up guard triggered, if it did; the solution
    /// is valid on `[0, blow_up)`.
    pub blow_up: Option<f64>,
}

impl Psi1Solution {
    pub fn ts(&self) -> &[f64] {
        &self.sol.ts
    }

    pub fn values(&self) -> Vec<f64> {
        self.sol.ys.iter().map(|y| y[0]).collect()
    }

    pub fn horizon(&self) -> f64 {
        self.sol.t_end()
    }

    pub fn at(&self, t: f64) -> Result<f64> {
        let mut out = [0.0];
        self.sol.eval(t, &mut out)?;
        Ok(out[0])
    }

    fn segments(&self) -> &[crate::numerics::ode::DenseSegment] {
        &self.sol.segments
    }
}

fn validate_riccati_inputs(params: &ModelParams, mc: &MeasureChange) -> Result<()> {
    params.validate(false)?;
    mc.validate(&params.sub)?;
    if mc.beta1 >= 1.0 {
        return Err(Error::InvalidInput(format!(
            "the Riccati transform requires beta1 in [0, 1), got {}",
            mc.beta1
        )));
    }
    Ok(())
}

/// Integrate the `Psi1` equation over `[0, horizon]` at local tolerance
/// `tol`, guarding against blow-up with the default cap.
pub fn solve_psi1(
    params: &ModelParams,
    mc: &MeasureChange,
    horizon: f64,
    tol: f64,
) -> Result<Psi1Solution> {
    solve_psi1_with_cap(params, mc, horizon, tol, DEFAULT_PSI1_CAP)
}

/// As [`solve_psi1`] with an explicit trajectory cap.
pub fn solve_psi1_with_cap(
    params: &ModelParams,
    mc: &MeasureChange,
    horizon: f64,
    tol: f64,
    cap: f64,
) -> Result<Psi1Solution> {
    solve_psi1_opts(params, mc, horizon, tol, tol, cap)
}

/// Full-control variant: separate relative/absolute tolerances. Long-run
/// integrations push `atol` far below `rtol` so the trajectory keeps
/// decaying instead of flattening at the absolute noise floor.
fn solve_psi1_opts(
    params: &ModelParams,
    mc: &MeasureChange,
    horizon: f64,
    rtol: f64,
    atol: f64,
    cap: f64,
) -> Result<Psi1Solution> {
    validate_riccati_inputs(params, mc)?;
    if !(horizon > 0.0) {
        return Err(Error::InvalidInput(format!("horizon must be > 0, got {horizon}")));
    }
    let sub = params.sub;
    let rho = params.rho;
    let two_alpha_bar = 2.0 * params.alpha * (1.0 - mc.beta1);
    let theta2 = mc.theta2;
    let theta_edge = sub.theta_max();
    let beta2 = mc.beta2;

    let jump_scale = if beta2 > 0.0 && !sub.is_null() {
        rho * beta2 / sub.cumulant_deriv(theta2, 2)?
    } else {
        0.0
    };
    let k1_at_theta2 = if jump_scale != 0.0 {
        sub.cumulant_deriv(theta2, 1)?
    } else {
        0.0
    };

    let opts = OdeOptions {
        rtol,
        atol,
        h_max: (horizon / 32.0).max(0.5),
        max_steps: 2_000_000,
    };
    let sol = dopri5(
        |t, y, dy| {
            let u = y[0];
            if u + theta2 >= theta_edge || u > cap {
                return false;
            }
            let mut rhs = -rho * u + 0.5 * (-two_alpha_bar * t).exp();
            if jump_scale != 0.0 {
                let k1 = match sub.cumulant_deriv(u + theta2, 1) {
                    Ok(v) => v,
                    Err(_) => return false,
                };
                rhs += jump_scale * (k1 - k1_at_theta2);
            }
            if !rhs.is_finite() {
                return false;
            }
            dy[0] = rhs;
            true
        },
        0.0,
        horizon,
        &[0.0],
        &opts,
        |_t, y| y[0] <= cap && y[0] + theta2 < theta_edge - BOUNDARY_GAP,
    )?;

    let blow_up = match sol.stopped {
        Some(Stop::Guard(t)) | Some(Stop::Boundary(t)) => Some(t),
        None => None,
    };
    Ok(Psi1Solution { sol, blow_up })
}

/// `Psi0` on the `Psi1` grid:
/// `theta1 (1 - exp(-alpha(1-beta1) t)) / (alpha(1-beta1))` plus the
/// cumulant integral accumulated per solver step with a 15-point Kronrod
/// rule on the dense output.
pub fn psi0_from_psi1(
    params: &ModelParams,
    mc: &MeasureChange,
    psi1: &Psi1Solution,
) -> Result<Vec<f64>> {
    let kappa_part = psi0_kappa_cumulative(params, mc, psi1)?;
    let alpha_bar = params.alpha * (1.0 - mc.beta1);
    Ok(psi1
        .ts()
        .iter()
        .zip(kappa_part)
        .map(|(&t, k)| mc.theta1 * expm1_ratio(alpha_bar, t) + k)
        .collect())
}

/// Cumulative `int_0^{t_i} kappa(Psi1 + theta2) - kappa(theta2) ds` on the
/// solver grid.
fn psi0_kappa_cumulative(
    params: &ModelParams,
    mc: &MeasureChange,
    psi1: &Psi1Solution,
) -> Result<Vec<f64>> {
    let sub = params.sub;
    let kappa_theta2 = sub.cumulant(mc.theta2)?;
    let mut out = Vec::with_capacity(psi1.ts().len());
    out.push(0.0);
    let mut acc = 0.0;
    for seg in psi1.segments() {
        let (inc, _) = kronrod15(
            &|s| {
                let mut u = [0.0];
                seg.eval(s, &mut u);
                sub.cumulant(u[0] + mc.theta2)
                    .map(|k| k - kappa_theta2)
                    .unwrap_or(f64::NAN)
            },
            seg.t0,
            seg.t0 + seg.h,
        );
        if !inc.is_finite() {
            return Err(Error::Domain(
                "Psi1 + theta2 left the cumulant domain while integrating Psi0".to_string(),
            ));
        }
        acc += inc;
        out.push(acc);
    }
    Ok(out)
}

/// A solved Riccati triple with dense evaluation and asymptotic metadata.
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    params: ModelParams,
    mc: MeasureChange,
    pub grid: Vec<f64>,
    pub psi0: Vec<f64>,
    pub psi1: Vec<f64>,
    pub psi2: Vec<f64>,
    /// Membership of `(theta2, beta2)` in `D_b(1/2)` (sufficient, not
    /// necessary, for a bounded global solution).
    pub admissible: bool,
    pub blow_up: Option<f64>,
    /// Long-run limit of `Psi0`, when computed ([`Self::solve_with_long_run`]).
    pub psi0_infinity: Option<f64>,
    /// Fitted exponential decay rate of `||(Psi1, Psi2)||`, when computed.
    pub decay_rate_fit: Option<f64>,
    psi1_dense: Psi1Solution,
    kappa_cumulative: Vec<f64>,
}

impl RiccatiSolution {
    /// Solve the system over `[0, horizon]`.
    pub fn solve(
        params: &ModelParams,
        mc: &MeasureChange,
        horizon: f64,
        tol: f64,
    ) -> Result<Self> {
        let psi1_dense = solve_psi1(params, mc, horizon, tol)?;
        let kappa_cumulative = psi0_kappa_cumulative(params, mc, &psi1_dense)?;
        let grid = psi1_dense.ts().to_vec();
        let psi1 = psi1_dense.values();
        let alpha_bar = params.alpha * (1.0 - mc.beta1);
        let psi2 = grid.iter().map(|&t| (-alpha_bar * t).exp()).collect();
        let psi0 = grid
            .iter()
            .zip(&kappa_cumulative)
            .map(|(&t, k)| mc.theta1 * expm1_ratio(alpha_bar, t) + k)
            .collect();
        let admissible = if mc.beta2 < 1.0 {
            in_db(&params.sub, mc.theta2, mc.beta2, 0.5, params.rho)?.member
        } else {
            false
        };
        Ok(Self {
            params: params.clone(),
            mc: *mc,
            grid,
            psi0,
            psi1,
            psi2,
            admissible,
            blow_up: psi1_dense.blow_up,
            psi0_infinity: None,
            decay_rate_fit: None,
            psi1_dense,
            kappa_cumulative,
        })
    }

    /// Solve and attach `psi0_infinity` / `decay_rate_fit` from [`long_run`].
    pub fn solve_with_long_run(
        params: &ModelParams,
        mc: &MeasureChange,
        horizon: f64,
        tol: f64,
    ) -> Result<Self> {
        let mut s = Self::solve(params, mc, horizon, tol)?;
        let lr = long_run(params, mc, tol)?;
        s.psi0_infinity = Some(lr.psi0_infinity);
        s.decay_rate_fit = Some(lr.decay_rate_fit);
        Ok(s)
    }

    pub fn horizon(&self) -> f64 {
        self.psi1_dense.horizon()
    }

    pub fn matches(&self, params: &ModelParams, mc: &MeasureChange) -> bool {
        self.params == *params && self.mc == *mc
    }

    pub fn psi1_at(&self, t: f64) -> Result<f64> {
        self.psi1_dense.at(t)
    }

    pub fn psi2_at(&self, t: f64) -> f64 {
        psi2_closed(&self.params, &self.mc, t)
    }

    /// Dense `Psi0`: cumulative value at the step start plus a Kronrod
    /// integral of the dense output over the remainder.
    pub fn psi0_at(&self, t: f64) -> Result<f64> {
        let alpha_bar = self.params.alpha * (1.0 - self.mc.beta1);
        let drift = self.mc.theta1 * expm1_ratio(alpha_bar, t);
        let horizon = self.horizon();
        if t < 0.0 || t > horizon + 1e-9 * (1.0 + horizon) {
            return Err(Error::HorizonExceeded { requested: t, horizon });
        }
        let idx = match self
            .grid
            .binary_search_by(|g| g.partial_cmp(&t).unwrap())
        {
            Ok(i) => return Ok(drift + self.kappa_cumulative[i]),
            Err(0) => return Ok(drift),
            Err(i) => i - 1,
        };
        let seg = &self.psi1_dense.segments()[idx];
        let kappa_theta2 = self.params.sub.cumulant(self.mc.theta2)?;
        let sub = self.params.sub;
        let theta2 = self.mc.theta2;
        let (partial, _) = kronrod15(
            &|s| {
                let mut u = [0.0];
                seg.eval(s, &mut u);
                sub.cumulant(u[0] + theta2).map(|k| k - kappa_theta2).unwrap_or(f64::NAN)
            },
            self.grid[idx],
            t.min(horizon),
        );
        if !partial.is_finite() {
            return Err(Error::Domain(
                "Psi1 + theta2 left the cumulant domain while integrating Psi0".to_string(),
            ));
        }
        Ok(drift + self.kappa_cumulative[idx] + partial)
    }
}

/// Long-run metadata of the solved system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LongRun {
    /// `theta1 / (alpha (1 - beta1)) + int_0^inf kappa(Psi1 + theta2) - kappa(theta2) ds`.
    pub psi0_infinity: f64,
    /// Least-squares slope of `log ||(Psi1, Psi2)||` over the final decade
    /// of the solved grid.
    pub decay_rate_fit: f64,
    /// The decay candidate `-alpha(1-beta1)` or `-rho(1-beta2)` nearer to
    /// the fit.
    pub nearest_candidate: f64,
    pub candidates: [f64; 2],
    pub horizon_used: f64,
}

/// Compute the long-run limit of `Psi0` and the asymptotic decay rate.
///
/// The horizon is chosen from the slowest linearised rate and doubled until
/// the tail integrand is negligible and two successive horizons agree
/// (Richardson-style check); fails with `NotConverged` when `Psi1` has not
/// fallen below `tol` by the largest horizon or when the trajectory blows up.
pub fn long_run(params: &ModelParams, mc: &MeasureChange, tol: f64) -> Result<LongRun> {
    validate_riccati_inputs(params, mc)?;
    let alpha_bar = params.alpha * (1.0 - mc.beta1);
    // Null subordinators contribute no kappa' slope, so the effective
    // volatility-speed reduction is zero for them.
    let eff_beta2 = if params.sub.is_null() { 0.0 } else { mc.beta2 };
    let rho_bar = params.rho * (1.0 - eff_beta2);
    let r_slow = alpha_bar.min(rho_bar);
    if r_slow <= 1e-8 {
        return Err(Error::NotConverged(format!(
            "slowest decay rate {r_slow:.3e} too small for a long-run limit"
        )));
    }
    let mut horizon = (40.0 / r_slow).clamp(50.0, 100_000.0);

    let mut previous: Option<(f64, f64)> = None; // (horizon, kappa integral)
    for _ in 0..5 {
        let atol = (tol * 1e-6).max(1e-300);
        let psi1 = solve_psi1_opts(params, mc, horizon, tol, atol, DEFAULT_PSI1_CAP)?;
        if let Some(tb) = psi1.blow_up {
            return Err(Error::NotConverged(format!(
                "Psi1 blew up at t = {tb:.6}; no long-run limit"
            )));
        }
        let tail = psi1.at(psi1.horizon())?;
        if tail.abs() > tol.max(1e-12) {
            horizon *= 2.0;
            previous = None;
            continue;
        }
        let kappa_cum = psi0_kappa_cumulative(params, mc, &psi1)?;
        let integral = *kappa_cum.last().expect("non-empty grid");
        let integrand_tail = params.sub.cumulant(tail + mc.theta2)? - params.sub.cumulant(mc.theta2)?;
        let tail_ok = integrand_tail.abs() < 1e-14 * (1.0 + integral.abs());
        if let Some((_, prev_integral)) = previous {
            let thresh = (100.0 * tol).max(1e-8 * integral.abs());
            if tail_ok && (integral - prev_integral).abs() <= thresh {
                let psi0_infinity = mc.theta1 / alpha_bar + integral;
                let (fit, candidates) = fit_decay(params, mc, &psi1, alpha_bar, atol);
                let nearest = if (fit - candidates[0]).abs() <= (fit - candidates[1]).abs() {
                    candidates[0]
                } else {
                    candidates[1]
                };
                return Ok(LongRun {
                    psi0_infinity,
                    decay_rate_fit: fit,
                    nearest_candidate: nearest,
                    candidates,
                    horizon_used: horizon,
                });
            }
        }
        previous = Some((horizon, integral));
        horizon *= 2.0;
    }
    Err(Error::NotConverged(format!(
        "Psi0 integral did not stabilise by horizon {horizon}"
    )))
}

fn fit_decay(
    params: &ModelParams,
    mc: &MeasureChange,
    psi1: &Psi1Solution,
    alpha_bar: f64,
    atol: f64,
) -> (f64, [f64; 2]) {
    let candidates = [-alpha_bar, -params.rho * (1.0 - mc.beta2)];
    let ts = psi1.ts();
    let vals = psi1.values();
    // Log-norm samples; below ~1e4 atol the trajectory is solver noise and
    // would flatten the fit.
    let noise_floor = (1e4 * atol).max(1e-250);
    let samples: Vec<(f64, f64)> = ts
        .iter()
        .zip(&vals)
        .map(|(&t, &v)| (t, v.hypot((-alpha_bar * t).exp())))
        .filter(|&(_, n)| n > noise_floor)
        .map(|(t, n)| (t, n.ln()))
        .collect();
    if samples.len() < 4 {
        return (f64::NAN, candidates);
    }
    let t_hi = samples.last().unwrap().0;
    let t_lo = t_hi / 10.0;
    let window: Vec<&(f64, f64)> = samples.iter().filter(|&&(t, _)| t >= t_lo).collect();
    let window = if window.len() >= 4 {
        window
    } else {
        samples.iter().rev().take(10).collect()
    };
    let n = window.len() as f64;
    let sum_t = pairwise_sum(&window.iter().map(|p| p.0).collect::<Vec<_>>());
    let sum_y = pairwise_sum(&window.iter().map(|p| p.1).collect::<Vec<_>>());
    let mean_t = sum_t / n;
    let mean_y = sum_y / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for &&(t, y) in &window {
        num += (t - mean_t) * (y - mean_y);
        den += (t - mean_t) * (t - mean_t);
    }
    (num / den, candidates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subordinators::SubordinatorSpec;
    use approx::assert_relative_eq;

    fn base_params() -> ModelParams {
        ModelParams::new(0.127, 1.11, SubordinatorSpec::cp_exp(0.4, 2.0).unwrap()).unwrap()
    }

    #[test]
    fn psi2_reference_points() {
        let p = base_params();
        assert_eq!(psi2_closed(&p, &MeasureChange::p(), 0.0), 1.0);
        // Half-life of the factor: log 2 / alpha days.
        let t_half = 2.0_f64.ln() / 0.127;
        assert_relative_eq!(
            psi2_closed(&p, &MeasureChange::p(), t_half),
            0.5,
            max_relative = 1e-14
        );
        let mc = MeasureChange::new(0.0, 0.0, 0.5, 0.0);
        assert_relative_eq!(
            psi2_closed(&p, &mc, 10.0),
            (-0.635_f64).exp(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn psi2_matches_its_ode() {
        let p = base_params();
        let mc = MeasureChange::new(0.0, 0.0, 0.5, 0.0);
        let rate = p.alpha * (1.0 - mc.beta1);
        let sol = dopri5(
            |_t, y, dy| {
                dy[0] = -rate * y[0];
                true
            },
            0.0,
            10.0,
            &[1.0],
            &OdeOptions { rtol: 1e-12, atol: 1e-12, ..Default::default() },
            |_, _| true,
        )
        .unwrap();
        let mut out = [0.0];
        sol.eval(10.0, &mut out).unwrap();
        assert_relative_eq!(out[0], psi2_closed(&p, &mc, 10.0), max_relative = 1e-11);
    }

    #[test]
    fn esscher_closed_form_reference() {
        let p = base_params();
        assert_eq!(psi1_closed_esscher(&p, 0.0), 0.0);
        assert_relative_eq!(
            psi1_closed_esscher(&p, 1.0),
            0.26059161271687326,
            epsilon = 1e-14
        );
        // Removable 2 alpha = rho case.
        let p2 = ModelParams::new(0.127, 0.254, SubordinatorSpec::cp_exp(0.4, 2.0).unwrap()).unwrap();
        assert_relative_eq!(
            psi1_closed_esscher(&p2, 2.0),
            (-0.508_f64).exp(),
            max_relative = 1e-9
        );
    }

    #[test]
    fn esscher_limit_matches_solver_near_resonance() {
        // rho = 2 alpha +/- eps bracket the removable singularity.
        for rho in [0.254 - 1e-6, 0.254 + 1e-6] {
            let p = ModelParams::new(0.127, rho, SubordinatorSpec::cp_exp(0.4, 2.0).unwrap()).unwrap();
            let sol = solve_psi1(&p, &MeasureChange::p(), 5.0, 1e-12).unwrap();
            let limit_params =
                ModelParams::new(0.127, 0.254, SubordinatorSpec::cp_exp(0.4, 2.0).unwrap()).unwrap();
            assert_relative_eq!(
                sol.at(2.0).unwrap(),
                psi1_closed_esscher(&limit_params, 2.0),
                max_relative = 1e-4
            );
        }
    }

    #[test]
    fn solver_matches_esscher_closed_form() {
        let p = base_params();
        let sol = solve_psi1(&p, &MeasureChange::p(), 20.0, 1e-10).unwrap();
        assert!(sol.blow_up.is_none());
        assert_eq!(sol.at(0.0).unwrap(), 0.0);
        let mut max_err: f64 = 0.0;
        for k in 0..=2000 {
            let t = 20.0 * k as f64 / 2000.0;
            let err = (sol.at(t).unwrap() - psi1_closed_esscher(&p, t)).abs();
            max_err = max_err.max(err);
        }
        assert!(max_err <= 1e-8, "max deviation {max_err:.3e}");
        assert_relative_eq!(sol.at(1.0).unwrap(), 0.26059161271687326, epsilon = 1e-8);
    }

    #[test]
    fn admissible_case_decays_below_bound() {
        let p = base_params();
        let mc = MeasureChange::new(0.0, -5.0, 0.45, 0.45);
        let sol = solve_psi1(&p, &mc, 120.0, 1e-10).unwrap();
        assert!(sol.blow_up.is_none());
        assert!(sol.at(100.0).unwrap() < 1e-6);
        let bound = crate::admissibility::u_zero(&p.sub, -5.0, 0.45, 0.5, p.rho).unwrap();
        let sup = sol.values().iter().fold(0.0_f64, |m, &v| m.max(v));
        assert!(sup < bound, "sup {sup} !< u_zero {bound}");
        // Non-negative along the grid.
        assert!(sol.values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn comparison_with_esscher_under_speed_only_change() {
        // beta2 > 0, beta1 = 0, theta_bar = 0: the extra kappa' term is
        // non-negative, so Psi1 dominates the Esscher trajectory pointwise.
        let p = base_params();
        let mc = MeasureChange::new(0.0, 0.0, 0.0, 0.15);
        let sol = solve_psi1(&p, &mc, 40.0, 1e-10).unwrap();
        for k in 0..=400 {
            let t = 40.0 * k as f64 / 400.0;
            assert!(
                sol.at(t).unwrap() >= psi1_closed_esscher(&p, t) - 1e-10,
                "t = {t}"
            );
        }
    }

    #[test]
    fn invariant_region_under_admissible_change() {
        let p = base_params();
        let mc = MeasureChange::new(0.3, -5.0, 0.45, 0.45);
        let r = RiccatiSolution::solve(&p, &mc, 150.0, 1e-10).unwrap();
        assert!(r.admissible);
        let edge = p.sub.theta_max() - mc.theta2;
        for (psi1, psi2) in r.psi1.iter().zip(&r.psi2) {
            assert!(*psi1 >= 0.0 && *psi1 < edge);
            assert!(*psi2 >= 0.0 && *psi2 <= 1.0);
        }
    }

    #[test]
    fn psi0_initial_condition_and_null_subordinator() {
        let null = ModelParams::new(0.127, 1.11, SubordinatorSpec::CpExp { c: 0.0, lambda: 2.0 })
            .unwrap();
        let mc = MeasureChange::new(1.0, 0.0, 0.0, 0.0);
        let sol = solve_psi1(&null, &mc, 30.0, 1e-10).unwrap();
        let psi0 = psi0_from_psi1(&null, &mc, &sol).unwrap();
        assert_eq!(psi0[0], 0.0);
        // Integrand reduces to theta1 Psi2: Psi0 = (1 - e^{-alpha t}) / alpha.
        for (t, v) in sol.ts().iter().zip(&psi0) {
            assert_relative_eq!(*v, (1.0 - (-0.127 * t).exp()) / 0.127, max_relative = 1e-9);
        }
    }

    #[test]
    fn psi0_esscher_matches_independent_quadrature() {
        let p = base_params();
        let r = RiccatiSolution::solve(&p, &MeasureChange::p(), 30.0, 1e-10).unwrap();
        for tau in [0.5, 3.0, 11.7, 30.0] {
            let via_quad = crate::numerics::quadrature::adaptive(
                |s| p.sub.cumulant(psi1_closed_esscher(&p, s)).unwrap(),
                0.0,
                tau,
                1e-13,
                1e-12,
            )
            .unwrap();
            assert_relative_eq!(r.psi0_at(tau).unwrap(), via_quad, max_relative = 1e-8);
        }
    }

    #[test]
    fn psi0_monotone_when_drift_and_tilt_positive() {
        let p = base_params();
        let mc = MeasureChange::new(0.2, 0.3, 0.2, 0.2);
        let r = RiccatiSolution::solve(&p, &mc, 50.0, 1e-10).unwrap();
        // kappa(Psi1 + theta2) >= kappa(theta2) since Psi1 >= 0; theta1 > 0.
        for w in r.psi0.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
    }

    #[test]
    fn long_run_esscher_decay_rate() {
        let p = base_params();
        let lr = long_run(&p, &MeasureChange::p(), 1e-10).unwrap();
        assert_relative_eq!(lr.decay_rate_fit, -0.127, max_relative = 0.01);
        assert_eq!(lr.nearest_candidate, -0.127);
    }

    #[test]
    fn long_run_null_subordinator_zero_limit() {
        let null = ModelParams::new(0.127, 1.11, SubordinatorSpec::CpExp { c: 0.0, lambda: 2.0 })
            .unwrap();
        let lr = long_run(&null, &MeasureChange::p(), 1e-10).unwrap();
        assert!(lr.psi0_infinity.abs() <= 1e-12);
    }

    #[test]
    fn long_run_admissible_speed_change() {
        let p = base_params();
        let mc = MeasureChange::new(0.0, -5.0, 0.45, 0.45);
        let lr = long_run(&p, &mc, 1e-10).unwrap();
        let near = lr
            .candidates
            .iter()
            .map(|c| (lr.decay_rate_fit - c).abs() / c.abs())
            .fold(f64::INFINITY, f64::min);
        assert!(near <= 0.02, "fit {} vs candidates {:?}", lr.decay_rate_fit, lr.candidates);
        assert_relative_eq!(lr.psi0_infinity, 0.054330724176957515, max_relative = 1e-6);
    }

    #[test]
    fn blow_up_guard_records_time() {
        // beta2 = 0.9 at theta2 = 0 is far outside D_b(1/2) for this rho;
        // the comparison field has no zero and the trajectory escapes.
        let p = ModelParams::new(0.127, 0.3, SubordinatorSpec::dirac(1.0).unwrap()).unwrap();
        let mc = MeasureChange::new(0.0, 0.0, 0.0, 0.95);
        let sol = solve_psi1(&p, &mc, 2000.0, 1e-10).unwrap();
        assert!(sol.blow_up.is_some(), "expected a recorded blow-up");
    }

    #[test]
    fn beta1_equal_one_rejected() {
        let p = base_params();
        let mc = MeasureChange::new(0.0, 0.0, 1.0, 0.0);
        assert!(solve_psi1(&p, &mc, 10.0, 1e-10).is_err());
    }
}
