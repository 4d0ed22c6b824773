//! Adaptive Gauss–Kronrod quadrature.
//!
//! A 7-point Gauss / 15-point Kronrod pair drives a globally adaptive
//! bisection scheme: the interval with the largest error estimate is split
//! until the summed error estimate meets the requested tolerance.

use std::collections::BinaryHeap;

use crate::error::{Error, Result};

// Abscissae and weights of the (G7, K15) pair on [-1, 1].
const XGK: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];
const WG: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

/// One application of the 15-point Kronrod rule on `[a, b]`.
///
/// Returns `(integral, error_estimate)`. The error estimate follows the
/// usual practice of sharpening `|K15 - G7|` against the scaled variation
/// of the integrand.
pub fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);

    let f_center = f(center);
    let mut res_kronrod = f_center * WGK[7];
    let mut res_gauss = f_center * WG[3];
    let mut res_abs = f_center.abs() * WGK[7];

    let mut fv = [0.0_f64; 15];
    fv[7] = f_center;
    for (j, &x) in XGK.iter().take(7).enumerate() {
        let dx = half * x;
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv[j] = f1;
        fv[14 - j] = f2;
        res_kronrod += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_gauss += WG[j / 2] * (f1 + f2);
        }
    }

    let mean = res_kronrod * 0.5;
    let mut res_asc = WGK[7] * (f_center - mean).abs();
    for (j, &v) in fv.iter().enumerate() {
        if j != 7 {
            let w = WGK[if j < 7 { j } else { 14 - j }];
            res_asc += w * (v - mean).abs();
        }
    }

    let value = res_kronrod * half;
    res_abs *= half.abs();
    res_asc *= half.abs();
    let mut err = ((res_kronrod - res_gauss) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    (value, err)
}

#[derive(PartialEq)]
struct Segment {
    err: f64,
    a: f64,
    b: f64,
    value: f64,
}

impl Eq for Segment {}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.err.partial_cmp(&other.err).unwrap_or(std::cmp::Ordering::Equal)
    }
}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

const MAX_SEGMENTS: usize = 4000;

/// Adaptive integration of `f` over the finite interval `[a, b]`.
///
/// Terminates when the accumulated error estimate is below
/// `max(abs_tol, rel_tol * |integral|)`.
pub fn adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (v, e) = kronrod15(&f, a, b);
    if !v.is_finite() {
        return Err(Error::Convergence(format!(
            "non-finite integrand on [{a}, {b}]"
        )));
    }
    let mut heap = BinaryHeap::new();
    heap.push(Segment { err: e, a, b, value: v });
    let mut total_value = v;
    let mut total_err = e;

    while total_err > abs_tol.max(rel_tol * total_value.abs()) {
        if heap.len() >= MAX_SEGMENTS {
            return Err(Error::Convergence(format!(
                "quadrature on [{a}, {b}] failed: error {total_err:.3e} after {MAX_SEGMENTS} segments"
            )));
        }
        let worst = heap.pop().ok_or_else(|| {
            Error::Convergence("quadrature heap exhausted".to_string())
        })?;
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval no longer splittable in f64; accept what we have.
            heap.push(worst);
            break;
        }
        let (v1, e1) = kronrod15(&f, worst.a, mid);
        let (v2, e2) = kronrod15(&f, mid, worst.b);
        if !(v1.is_finite() && v2.is_finite()) {
            return Err(Error::Convergence(format!(
                "non-finite integrand near [{}, {}]",
                worst.a, worst.b
            )));
        }
        total_value += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.err;
        heap.push(Segment { err: e1, a: worst.a, b: mid, value: v1 });
        heap.push(Segment { err: e2, a: mid, b: worst.b, value: v2 });
    }
    Ok(total_value)
}

/// Adaptive integration of `f` over `[a, inf)` via the rational map
/// `z = a + u/(1-u)`, `u` in `[0, 1)`.
pub fn adaptive_semi_infinite<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<f64> {
    adaptive(
        move |u| {
            let one_minus = 1.0 - u;
            let z = a + u / one_minus;
            let jac = 1.0 / (one_minus * one_minus);
            let fz = f(z);
            if fz == 0.0 {
                0.0
            } else {
                fz * jac
            }
        },
        0.0,
        1.0,
        abs_tol,
        rel_tol,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn polynomial_is_exact() {
        let v = adaptive(|x| x * x * x - 2.0 * x + 1.0, -1.0, 3.0, 1e-13, 1e-13).unwrap();
        assert_relative_eq!(v, 16.0, max_relative = 1e-14);
    }

    #[test]
    fn gaussian_tail() {
        let v = adaptive_semi_infinite(|x| (-x * x / 2.0).exp(), 0.0, 1e-12, 1e-11).unwrap();
        assert_relative_eq!(v, (std::f64::consts::PI / 2.0).sqrt(), max_relative = 1e-10);
    }

    #[test]
    fn integrable_endpoint_singularity() {
        // int_0^1 x^{-1/2} dx = 2
        let v = adaptive(|x| x.powf(-0.5), 0.0, 1.0, 1e-11, 1e-10).unwrap();
        assert_relative_eq!(v, 2.0, max_relative = 1e-9);
    }

    #[test]
    fn oscillatory() {
        let v = adaptive(|x| (10.0 * x).sin(), 0.0, 2.0, 1e-12, 1e-12).unwrap();
        assert_relative_eq!(v, (1.0 - (20.0_f64).cos()) / 10.0, max_relative = 1e-11);
    }
}
