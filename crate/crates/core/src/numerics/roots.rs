//! Bisection and a real-root cubic solver.

use crate::error::{Error, Result};

/// Bisection on `[lo, hi]` down to an absolute width `tol_x`.
///
/// Requires a sign change (a zero endpoint counts). Fails with
/// `Convergence` if the iteration budget is exhausted first.
pub fn bisect<F: Fn(f64) -> f64>(
    f: F,
    mut lo: f64,
    mut hi: f64,
    tol_x: f64,
    max_iter: usize,
) -> Result<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::Domain(format!(
            "bisect: no sign change on [{lo}, {hi}] (f = {flo:.3e}, {fhi:.3e})"
        )));
    }
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol_x || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        let fmid = f(mid);
        if fmid == 0.0 {
            return Ok(mid);
        }
        if fmid.signum() == flo.signum() {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Convergence(format!(
        "bisect: interval [{lo}, {hi}] still wider than {tol_x} after {max_iter} iterations"
    )))
}

/// Real roots of `c3 x^3 + c2 x^2 + c1 x + c0`, ascending. Degenerate
/// leading coefficients fall back to the quadratic/linear formulas.
pub fn solve_cubic_real(c3: f64, c2: f64, c1: f64, c0: f64) -> Vec<f64> {
    if c3.abs() < 1e-300 {
        // Quadratic.
        if c2.abs() < 1e-300 {
            if c1.abs() < 1e-300 {
                return vec![];
            }
            return vec![-c0 / c1];
        }
        let disc = c1 * c1 - 4.0 * c2 * c0;
        if disc < 0.0 {
            return vec![];
        }
        let s = disc.sqrt();
        let mut r = vec![(-c1 - s) / (2.0 * c2), (-c1 + s) / (2.0 * c2)];
        r.sort_by(|a, b| a.partial_cmp(b).unwrap());
        return r;
    }
    // Depressed form t^3 + p t + q with x = t - c2/(3 c3).
    let b = c2 / c3;
    let c = c1 / c3;
    let d = c0 / c3;
    let shift = b / 3.0;
    let p = c - b * b / 3.0;
    let q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d;

    let disc = (q / 2.0) * (q / 2.0) + (p / 3.0) * (p / 3.0) * (p / 3.0);
    let mut roots = if disc > 1e-14 * (q * q + p * p * p.abs() + 1e-300) {
        let s = disc.sqrt();
        let t = (-q / 2.0 + s).cbrt() + (-q / 2.0 - s).cbrt();
        vec![t - shift]
    } else if disc.abs() <= 1e-14 * (q * q + p * p * p.abs() + 1e-300) {
        // Repeated roots.
        let u = (-q / 2.0).cbrt();
        vec![2.0 * u - shift, -u - shift]
    } else {
        // Three distinct real roots: trigonometric form.
        let r = 2.0 * (-p / 3.0).sqrt();
        let arg = (3.0 * q / (p * r)).clamp(-1.0, 1.0);
        let phi = arg.acos();
        (0..3)
            .map(|k| r * ((phi - 2.0 * std::f64::consts::PI * k as f64) / 3.0).cos() - shift)
            .collect()
    };
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    roots.dedup_by(|a, b| (*a - *b).abs() < 1e-12 * (1.0 + a.abs()));
    roots
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn bisect_finds_sqrt2() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-13, 200).unwrap();
        assert_relative_eq!(r, 2.0_f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn bisect_rejects_bad_bracket() {
        assert!(bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-12, 200).is_err());
    }

    #[test]
    fn cubic_three_real_roots() {
        // (x - 1)(x - 2)(x + 3) = x^3 - 7x + 6
        let roots = solve_cubic_real(1.0, 0.0, -7.0, 6.0);
        assert_eq!(roots.len(), 3);
        assert_relative_eq!(roots[0], -3.0, epsilon = 1e-10);
        assert_relative_eq!(roots[1], 1.0, epsilon = 1e-10);
        assert_relative_eq!(roots[2], 2.0, epsilon = 1e-10);
    }

    #[test]
    fn cubic_single_real_root() {
        // x^3 + x + 1: single real root near -0.6823278038280193
        let roots = solve_cubic_real(1.0, 0.0, 1.0, 1.0);
        assert_eq!(roots.len(), 1);
        assert_relative_eq!(roots[0], -0.6823278038280193, epsilon = 1e-12);
    }
}
