//! Principal branch of the Lambert W function.

use crate::error::{Error, Result};

/// `W0(x)`: the solution `w >= -1` of `w e^w = x`, defined for
/// `x >= -1/e`. Halley iteration from a branch-aware starting point;
/// residual `|w e^w - x|` is at the few-ulp level across `[-1/e, inf)`.
pub fn lambert_w0(x: f64) -> Result<f64> {
    let branch = -(-1.0_f64).exp(); // -1/e
    if !x.is_finite() {
        return Err(Error::Domain(format!("lambert_w0: non-finite argument {x}")));
    }
    // p^2 = 2(1 + e x) >= 0 on the domain; tolerate rounding just below -1/e.
    let p_sq = 2.0 * (1.0 + std::f64::consts::E * x);
    if p_sq < -1e-12 {
        return Err(Error::Domain(format!(
            "lambert_w0: argument {x} below the branch point -1/e = {branch}"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let p = p_sq.max(0.0).sqrt();
    // Series around the branch point w = -1 + p - p^2/3 + 11 p^3/72 - 43 p^4/540.
    let w_branch = -1.0 + p - p_sq / 3.0 + 11.0 / 72.0 * p * p_sq - 43.0 / 540.0 * p_sq * p_sq;
    if p < 1e-4 {
        return Ok(w_branch);
    }

    let mut w = if x < 0.25 {
        w_branch
    } else if x < std::f64::consts::E {
        // Pade-flavoured start near zero is unnecessary; ln(1+x) is close
        // enough for Halley on this range.
        x.ln_1p()
    } else {
        let l = x.ln();
        l - l.ln()
    };

    for _ in 0..40 {
        let ew = w.exp();
        let wew = w * ew;
        let r = wew - x;
        let denom = ew * (w + 1.0) - (w + 2.0) * r / (2.0 * (w + 1.0));
        let dw = r / denom;
        w -= dw;
        if dw.abs() <= 1e-16 * (1.0 + w.abs()) {
            break;
        }
    }
    Ok(w.max(-1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_and_branch_point() {
        assert_eq!(lambert_w0(0.0).unwrap(), 0.0);
        let w = lambert_w0(-(-1.0_f64).exp()).unwrap();
        assert_relative_eq!(w, -1.0, epsilon = 1e-7);
    }

    #[test]
    fn identity_w_exp_w() {
        assert_relative_eq!(lambert_w0(1.0).unwrap(), 0.5671432904097838, epsilon = 1e-14);
        assert_relative_eq!(
            lambert_w0(std::f64::consts::E).unwrap(),
            1.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn newton_reference_value() {
        // x = -exp(-(1 + 1/(2 * 1.11))), the speed-reduction boundary case.
        let x = -(-(1.0 + 1.0 / 2.22_f64)).exp();
        let w = lambert_w0(x).unwrap();
        assert_relative_eq!(w, -0.32426919688962, epsilon = 1e-10);
    }

    #[test]
    fn residual_on_grid() {
        let branch = -(-1.0_f64).exp();
        for k in 0..=1000 {
            let x = branch + (10.0 - branch) * k as f64 / 1000.0;
            let w = lambert_w0(x).unwrap();
            assert!(w >= -1.0);
            let resid = (w * w.exp() - x).abs();
            assert!(resid <= 1e-13, "x = {x}: residual {resid:.3e}");
        }
    }

    #[test]
    fn rejects_below_branch() {
        assert!(lambert_w0(-0.5).is_err());
    }
}
