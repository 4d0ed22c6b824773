//! Forward prices and risk premia for mean-reverting commodity spot models
//! with Barndorff-Nielsen–Shephard stochastic volatility.
//!
//! The spot is driven by a factor `X` and its squared volatility, both
//! Ornstein-Uhlenbeck processes; the volatility is fed by a Lévy
//! subordinator `L`:
//!
//! ```text
//! dX(t)       = -alpha X(t) dt + sigma(t) dW(t)
//! d sigma2(t) = -rho sigma2(t) dt + dL(t)
//! ```
//!
//! Spot models: arithmetic `S = Lambda_a + X` and geometric
//! `S = Lambda_g exp(X)`. Pricing happens under a two-parameter-pair family
//! of structure-preserving measures `Q(theta1, theta2, beta1, beta2)` that
//! shift the mean-reversion levels and slow the speeds of both processes;
//! `beta_bar = 0` recovers the Esscher transform.
//!
//! Module map:
//! - [`subordinators`]: Lévy measures, cumulant functions, quadrature oracle;
//! - [`admissibility`]: measure parameters and the `Lambda`-function
//!   analysis controlling global Riccati solutions;
//! - [`riccati`]: the generalised Riccati system, closed forms, asymptotics;
//! - [`pricing`]: forwards, swaps, risk premia and sign diagnostics;
//! - [`mc`]: exact-in-distribution Monte Carlo used as the pricing oracle;
//! - [`cli`]: the batch command-line front end.

pub mod admissibility;
pub mod cli;
pub mod error;
pub mod mc;
pub mod numerics;
pub mod pricing;
pub mod riccati;
pub mod subordinators;

pub use admissibility::{
    beta_max, check_assumption_p, in_db, lambda_fn, u_min, u_zero, AssumptionP, BetaMax,
    DbMembership, MarketState, MeasureChange, ModelParams, Seasonal,
};
pub use error::{Error, Result};
pub use mc::{
    estimate_forward, estimate_premium, ks_two_sample, simulate_vol, Measure, PathConfig,
    SimEstimate, VolPath,
};
pub use numerics::lambert_w0;
pub use pricing::{
    check_finiteness_p, forward_arithmetic, forward_geometric, forward_geometric_p,
    premium_arithmetic, premium_curve, premium_geometric, sigma_diagnostics, swap_price,
    PremiumCurve, SpotModel,
};
pub use riccati::{
    long_run, psi0_from_psi1, psi1_closed_esscher, psi2_closed, solve_psi1, LongRun,
    RiccatiSolution,
};
pub use subordinators::{levy_quadrature_oracle, SubordinatorSpec};
