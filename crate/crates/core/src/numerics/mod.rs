//! Numerical kernels: quadrature, ODE integration, root finding.

pub mod lambert;
pub mod ode;
pub mod quadrature;
pub mod roots;

pub use lambert::lambert_w0;

/// `(1 - exp(-x t)) / x` with the removable `x -> 0` limit `t`.
pub fn expm1_ratio(x: f64, t: f64) -> f64 {
    if x.abs() < 1e-12 {
        t * (1.0 - 0.5 * x * t)
    } else {
        -(-x * t).exp_m1() / x
    }
}

/// Pairwise (cascade) summation; associativity-stable regardless of
/// how the inputs were produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn expm1_ratio_limit() {
        assert_relative_eq!(expm1_ratio(0.0, 3.0), 3.0);
        assert_relative_eq!(expm1_ratio(1e-14, 3.0), 3.0, max_relative = 1e-10);
        assert_relative_eq!(
            expm1_ratio(0.127, 10.0),
            (1.0 - (-1.27_f64).exp()) / 0.127,
            max_relative = 1e-14
        );
    }

    #[test]
    fn pairwise_matches_naive_on_small_input() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64).sin()).collect();
        let naive: f64 = xs.iter().sum();
        assert_relative_eq!(pairwise_sum(&xs), naive, max_relative = 1e-12);
    }
}
