//! Dormand–Prince 5(4) adaptive Runge–Kutta with dense output.
//!
//! The classic explicit embedded pair: fifth-order solution, fourth-order
//! error estimate, FSAL, and the standard quartic interpolant on every
//! accepted step so solutions can be evaluated anywhere in the solved span.

use crate::error::{Error, Result};

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
// Error coefficients b - b_hat.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Dense-output coefficients.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-10,
            h_max: f64::INFINITY,
            max_steps: 1_000_000,
        }
    }
}

/// Interpolation coefficients for one accepted step `[t0, t0 + h]`.
#[derive(Debug, Clone)]
pub struct DenseSegment {
    pub t0: f64,
    pub h: f64,
    rcont: [Vec<f64>; 5],
}

impl DenseSegment {
    /// Evaluate the interpolant at `t` (valid for `t` in `[t0, t0 + h]`).
    pub fn eval(&self, t: f64, out: &mut [f64]) {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        for i in 0..out.len() {
            out[i] = self.rcont[0][i]
                + s * (self.rcont[1][i]
                    + s1 * (self.rcont[2][i]
                        + s * (self.rcont[3][i] + s1 * self.rcont[4][i])));
        }
    }
}

/// Why the integration stopped before reaching `t_end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stop {
    /// The guard predicate rejected the state at this time.
    Guard(f64),
    /// Step size collapsed against a domain boundary at this time.
    Boundary(f64),
}

#[derive(Debug, Clone)]
pub struct OdeSolution {
    pub ts: Vec<f64>,
    pub ys: Vec<Vec<f64>>,
    pub segments: Vec<DenseSegment>,
    pub stopped: Option<Stop>,
}

impl OdeSolution {
    pub fn t_end(&self) -> f64 {
        *self.ts.last().expect("solution has at least the initial point")
    }

    /// Dense evaluation; `t` must lie within the solved span.
    pub fn eval(&self, t: f64, out: &mut [f64]) -> Result<()> {
        let t0 = self.ts[0];
        let t1 = self.t_end();
        if t < t0 - 1e-12 || t > t1 + 1e-9 * (1.0 + t1.abs()) {
            return Err(Error::HorizonExceeded { requested: t, horizon: t1 });
        }
        if self.segments.is_empty() || t <= t0 {
            out.copy_from_slice(&self.ys[0]);
            return Ok(());
        }
        let idx = match self
            .segments
            .binary_search_by(|seg| seg.t0.partial_cmp(&t).unwrap())
        {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        };
        self.segments[idx].eval(t.min(t1), out);
        Ok(())
    }
}

/// Integrate `y' = f(t, y)` from `t0` to `t_end`.
///
/// `f` fills `dy` and returns `false` when `(t, y)` lies outside the domain
/// of the vector field, in which case the step is retried with a smaller
/// size; if the step size collapses the integration stops with
/// [`Stop::Boundary`]. After each accepted step `guard(t, y)` is consulted;
/// `false` truncates the solution with [`Stop::Guard`].
pub fn dopri5<F, G>(
    mut f: F,
    t0: f64,
    t_end: f64,
    y0: &[f64],
    opts: &OdeOptions,
    mut guard: G,
) -> Result<OdeSolution>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> bool,
    G: FnMut(f64, &[f64]) -> bool,
{
    let n = y0.len();
    let span = t_end - t0;
    if span <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "ode: t_end {t_end} must exceed t0 {t0}"
        )));
    }

    let mut ts = vec![t0];
    let mut ys = vec![y0.to_vec()];
    let mut segments = Vec::new();

    let mut y = y0.to_vec();
    let mut t = t0;
    let mut k1 = vec![0.0; n];
    if !f(t, &y, &mut k1) {
        return Err(Error::Domain(format!(
            "ode: initial state outside vector-field domain at t = {t}"
        )));
    }

    // Crude initial step from the first derivative; the controller fixes it.
    let d0 = y.iter().map(|v| v.abs()).fold(0.0_f64, f64::max);
    let d1 = k1.iter().map(|v| v.abs()).fold(0.0_f64, f64::max);
    let mut h = (0.01 * (1.0 + d0) / (1.0 + d1)).min(opts.h_max).min(span);

    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut y_stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];

    let mut steps = 0usize;
    let mut stopped = None;

    'outer: while t < t_end {
        steps += 1;
        if steps > opts.max_steps {
            return Err(Error::Convergence(format!(
                "ode: exceeded {} steps at t = {t}",
                opts.max_steps
            )));
        }
        h = h.min(t_end - t).min(opts.h_max);
        let h_floor = 1e-14 * (1.0 + t.abs());
        if h < h_floor {
            // Underflow against an enormous vector field is a finite-time
            // escape, not a solver failure.
            let f_norm = k1.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            let y_norm = y.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            if f_norm > 1e8 * (1.0 + y_norm) {
                stopped = Some(Stop::Boundary(t));
                break 'outer;
            }
            return Err(Error::Convergence(format!(
                "ode: step size underflow at t = {t}"
            )));
        }

        let mut domain_ok = true;
        macro_rules! stage {
            ($k:ident, $c:expr, $($a:expr, $kk:ident),+) => {{
                for i in 0..n {
                    y_stage[i] = y[i] $(+ h * $a * $kk[i])+;
                }
                if !f(t + $c * h, &y_stage, &mut $k) {
                    domain_ok = false;
                }
            }};
        }

        stage!(k2, C2, A21, k1);
        if domain_ok {
            stage!(k3, C3, A31, k1, A32, k2);
        }
        if domain_ok {
            stage!(k4, C4, A41, k1, A42, k2, A43, k3);
        }
        if domain_ok {
            stage!(k5, C5, A51, k1, A52, k2, A53, k3, A54, k4);
        }
        if domain_ok {
            stage!(k6, 1.0, A61, k1, A62, k2, A63, k3, A64, k4, A65, k5);
        }
        if domain_ok {
            for i in 0..n {
                y_new[i] = y[i]
                    + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
            }
            if !f(t + h, &y_new, &mut k7) {
                domain_ok = false;
            }
        }

        if !domain_ok {
            // The vector field is undefined somewhere inside this step:
            // the solution is running into the domain boundary.
            if h <= 16.0 * h_floor {
                stopped = Some(Stop::Boundary(t));
                break 'outer;
            }
            h *= 0.25;
            continue;
        }

        let mut err_sq = 0.0;
        for i in 0..n {
            let e = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i]
                    + E7 * k7[i]);
            let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            err_sq += (e / sc) * (e / sc);
        }
        let err = (err_sq / n as f64).sqrt();

        if !err.is_finite() {
            // Overflow inside the step: same treatment as a domain failure.
            if h <= 16.0 * h_floor {
                stopped = Some(Stop::Boundary(t));
                break 'outer;
            }
            h *= 0.25;
            continue;
        }

        if err <= 1.0 {
            // Accept: store dense coefficients, advance, FSAL.
            let mut rcont: [Vec<f64>; 5] = [
                vec![0.0; n],
                vec![0.0; n],
                vec![0.0; n],
                vec![0.0; n],
                vec![0.0; n],
            ];
            for i in 0..n {
                let ydiff = y_new[i] - y[i];
                let bspl = h * k1[i] - ydiff;
                rcont[0][i] = y[i];
                rcont[1][i] = ydiff;
                rcont[2][i] = bspl;
                rcont[3][i] = ydiff - h * k7[i] - bspl;
                rcont[4][i] = h
                    * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i]
                        + D7 * k7[i]);
            }
            segments.push(DenseSegment { t0: t, h, rcont });
            t += h;
            y.copy_from_slice(&y_new);
            k1.copy_from_slice(&k7);
            ts.push(t);
            ys.push(y.clone());

            if !guard(t, &y) {
                stopped = Some(Stop::Guard(t));
                break 'outer;
            }

            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            h *= factor;
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
        }
    }

    Ok(OdeSolution { ts, ys, segments, stopped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exponential_decay() {
        let sol = dopri5(
            |_t, y, dy| {
                dy[0] = -0.5 * y[0];
                true
            },
            0.0,
            10.0,
            &[2.0],
            &OdeOptions { rtol: 1e-12, atol: 1e-12, ..Default::default() },
            |_, _| true,
        )
        .unwrap();
        let mut out = [0.0];
        for &t in &[0.0, 1.0, 2.5, 7.3, 10.0] {
            sol.eval(t, &mut out).unwrap();
            assert_relative_eq!(out[0], 2.0 * (-0.5 * t).exp(), max_relative = 1e-9);
        }
    }

    #[test]
    fn harmonic_oscillator_dense_output() {
        let sol = dopri5(
            |_t, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
                true
            },
            0.0,
            20.0,
            &[1.0, 0.0],
            &OdeOptions { rtol: 1e-11, atol: 1e-11, ..Default::default() },
            |_, _| true,
        )
        .unwrap();
        let mut out = [0.0, 0.0];
        for k in 0..200 {
            let t = 0.1 * k as f64;
            sol.eval(t, &mut out).unwrap();
            assert_relative_eq!(out[0], t.cos(), epsilon = 1e-8);
        }
    }

    #[test]
    fn guard_truncates() {
        let sol = dopri5(
            |_t, y, dy| {
                dy[0] = y[0];
                true
            },
            0.0,
            10.0,
            &[1.0],
            &OdeOptions::default(),
            |_, y| y[0] < 5.0,
        )
        .unwrap();
        match sol.stopped {
            Some(Stop::Guard(t)) => assert!(t < 2.0, "stopped at {t}"),
            other => panic!("expected guard stop, got {other:?}"),
        }
    }

    #[test]
    fn boundary_stop_on_finite_time_blowup() {
        // y' = y^2 / (1 - y) style field undefined for y >= 1.
        let sol = dopri5(
            |_t, y, dy| {
                if y[0] >= 1.0 {
                    return false;
                }
                dy[0] = 1.0 / (1.0 - y[0]);
                true
            },
            0.0,
            10.0,
            &[0.0],
            &OdeOptions::default(),
            |_, _| true,
        )
        .unwrap();
        match sol.stopped {
            Some(Stop::Boundary(t)) => assert!((t - 0.5).abs() < 1e-3, "stopped at {t}"),
            other => panic!("expected boundary stop, got {other:?}"),
        }
    }
}
