//! Exact-in-distribution Monte Carlo simulation of `(X, sigma^2)`.
//!
//! The squared volatility decays deterministically at rate `rho` between
//! jumps of the subordinator, so a path is fully described by its jump
//! record. Under the historical measure the jumps form a homogeneous
//! compound Poisson process; under a pricing measure they arrive with the
//! state-dependent intensity `I0 + I1 sigma^2(t-)` and carry tilted sizes,
//! simulated by thinning: between jumps the intensity is non-increasing,
//! so its value at the previous event dominates, and rejected proposals
//! re-arm the clock at the proposal time.
//!
//! Conditionally on the volatility path, `X` is Gaussian and is sampled
//! exactly: the conditional variance over any interval is a closed-form sum
//! over the piecewise-exponential segments of `sigma^2`.
//!
//! Tempered-stable drivers have infinite activity and are simulated only
//! behind an explicit truncation threshold `epsilon`: jumps below the
//! threshold are replaced by their compensating drift, which turns the
//! inter-jump decay into relaxation towards a small floor.
//!
//! Paths are independent work units. Every path derives its own ChaCha
//! streams from `(seed, path index, stream tag)`, so estimates are
//! bit-identical for a given seed regardless of the worker count.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admissibility::{MarketState, MeasureChange, ModelParams};
use crate::error::{Error, Result};
use crate::numerics::{expm1_ratio, pairwise_sum, quadrature};
use crate::pricing::SpotModel;
use crate::subordinators::SubordinatorSpec;

/// Simulation measure: the historical one or a pricing measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Measure {
    P,
    Q(MeasureChange),
}

impl Measure {
    fn change(&self) -> MeasureChange {
        match self {
            Measure::P => MeasureChange::p(),
            Measure::Q(mc) => *mc,
        }
    }

    pub fn validate(&self, sub: &SubordinatorSpec) -> Result<()> {
        match self {
            Measure::P => Ok(()),
            Measure::Q(mc) => mc.validate(sub),
        }
    }
}

/// Path-count, seed and horizon of a simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    pub n_paths: usize,
    pub seed: u64,
    /// Horizon in days; paths are simulated on `[0, horizon]` relative to
    /// the market state's time.
    pub horizon: f64,
    /// Output times for path dumps, sorted within `[0, horizon]`.
    #[serde(default)]
    pub obs_grid: Vec<f64>,
    /// Jump-truncation threshold for tempered-stable drivers.
    #[serde(default)]
    pub ts_epsilon: Option<f64>,
}

impl PathConfig {
    pub fn new(n_paths: usize, seed: u64, horizon: f64) -> Self {
        Self { n_paths, seed, horizon, obs_grid: vec![horizon], ts_epsilon: None }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::InvalidInput("n_paths must be >= 1".to_string()));
        }
        if !(self.horizon >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "horizon must be >= 0, got {}",
                self.horizon
            )));
        }
        let mut prev = 0.0;
        for &t in &self.obs_grid {
            if t < prev || t > self.horizon + 1e-12 {
                return Err(Error::InvalidInput(
                    "obs_grid must be sorted within [0, horizon]".to_string(),
                ));
            }
            prev = t;
        }
        if let Some(eps) = self.ts_epsilon {
            if !(eps > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "ts_epsilon must be > 0, got {eps}"
                )));
            }
        }
        Ok(())
    }
}

/// A Monte Carlo estimate; deterministic given `(seed, n_paths, parameters)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub seed: u64,
}

/// One volatility jump: time, size, and the value just after.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpRecord {
    pub t: f64,
    pub size: f64,
    pub value_after: f64,
}

/// A simulated `sigma^2` path: piecewise relaxation toward `floor` at rate
/// `rho`, interrupted by jumps.
#[derive(Debug, Clone, PartialEq)]
pub struct VolPath {
    pub sigma2_0: f64,
    pub rho: f64,
    /// Stationary level of the inter-jump drift (0 for exact finite-activity
    /// simulation; the compensating drift over jump rate for truncated
    /// tempered stable).
    pub floor: f64,
    pub jumps: Vec<JumpRecord>,
    pub horizon: f64,
}

impl VolPath {
    /// Right-continuous evaluation of `sigma^2` at `t`.
    pub fn sigma2_at(&self, t: f64) -> f64 {
        let idx = self.jumps.partition_point(|j| j.t <= t);
        let (t0, v0) = if idx == 0 {
            (0.0, self.sigma2_0)
        } else {
            let j = &self.jumps[idx - 1];
            (j.t, j.value_after)
        };
        self.floor + (v0 - self.floor) * (-self.rho * (t - t0)).exp()
    }

    pub fn jump_count(&self) -> usize {
        self.jumps.len()
    }
}

// ---------------------------------------------------------------------------
// Per-path RNG streams.

const STREAM_VOL_P: u64 = 1;
const STREAM_VOL_Q: u64 = 2;
const STREAM_GAUSS: u64 = 3;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based stream split: a ChaCha generator keyed by
/// `(seed, path, stream)`. Order-independent across paths and workers.
fn stream_rng(seed: u64, path: u64, stream: u64) -> ChaCha8Rng {
    let mut state = seed
        ^ path.wrapping_mul(0xD1B5_4A32_D192_ED03)
        ^ stream.wrapping_mul(0x8CB9_2BA7_2F3D_8DD7);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

fn exp_draw(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    let e: f64 = rng.sample(Exp1);
    e / rate
}

fn normal_draw(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

// ---------------------------------------------------------------------------
// Tempered-stable truncated sampler.

/// Sampler for a density proportional to `z^p e^{-eta z}` on `(eps, inf)`,
/// with `p < 0`. Piece masses are precomputed by quadrature; each piece is
/// sampled by inversion of its dominating power law / exponential and a
/// one-sided rejection.
#[derive(Debug, Clone)]
struct TsSampler {
    eps: f64,
    eta: f64,
    p: f64,
    split: f64,
    mass_low: f64,
    /// Total unnormalised mass `int_eps^inf z^p e^{-eta z} dz`.
    mass: f64,
}

impl TsSampler {
    fn build(eps: f64, eta: f64, p: f64) -> Result<Self> {
        if !(eta > 0.0) {
            return Err(Error::Domain(format!("ts sampler: eta must be > 0, got {eta}")));
        }
        let split = eps.max(1.0);
        let mass_low = if eps < 1.0 {
            quadrature::adaptive(|z| z.powf(p) * (-eta * z).exp(), eps, 1.0, 1e-12, 1e-10)?
        } else {
            0.0
        };
        let mass_high =
            quadrature::adaptive_semi_infinite(|z| z.powf(p) * (-eta * z).exp(), split, 1e-12, 1e-10)?;
        Ok(Self { eps, eta, p, split, mass_low, mass: mass_low + mass_high })
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Result<f64> {
        for _ in 0..100_000 {
            let low = rng.random::<f64>() * self.mass < self.mass_low;
            if low {
                // Proposal ~ z^p on (eps, 1]; accept with exp(-eta (z - eps)).
                let u: f64 = rng.random();
                let z = if (self.p + 1.0).abs() < 1e-12 {
                    (self.eps.ln() * (1.0 - u)).exp()
                } else {
                    let q = self.p + 1.0;
                    (self.eps.powf(q) + u * (1.0 - self.eps.powf(q))).powf(1.0 / q)
                };
                if rng.random::<f64>() <= (-self.eta * (z - self.eps)).exp() {
                    return Ok(z);
                }
            } else {
                // Proposal ~ exp(-eta z) on (split, inf); accept with (z/split)^p.
                let z = self.split + exp_draw(rng, self.eta);
                if rng.random::<f64>() <= (z / self.split).powf(self.p) {
                    return Ok(z);
                }
            }
        }
        Err(Error::Convergence("tempered-stable rejection sampler stalled".to_string()))
    }
}

// ---------------------------------------------------------------------------
// Volatility simulation.

/// Precomputed per-run simulation context (rates, tilt constants,
/// quadrature masses); building it once keeps the per-path cost flat.
#[derive(Debug, Clone)]
struct VolSim {
    rho: f64,
    floor: f64,
    kind: VolKind,
}

#[derive(Debug, Clone)]
enum VolKind {
    Null,
    HomDirac { rate: f64, size: f64 },
    HomCpExp { rate: f64, size_rate: f64 },
    HomTs { rate: f64, sampler: TsSampler },
    ThinDirac { i0: f64, i1: f64, size: f64 },
    ThinCpExp { i0: f64, i1: f64, eta: f64, k: f64 },
    ThinTs { c: f64, k: f64, base: TsSampler, tilted: TsSampler },
}

impl VolSim {
    fn build(
        params: &ModelParams,
        measure: &Measure,
        ts_epsilon: Option<f64>,
    ) -> Result<Self> {
        let sub = params.sub;
        let rho = params.rho;
        if sub.is_null() {
            return Ok(Self { rho, floor: 0.0, kind: VolKind::Null });
        }
        match (*measure, sub) {
            (Measure::P, SubordinatorSpec::Dirac { a }) => Ok(Self {
                rho,
                floor: 0.0,
                kind: VolKind::HomDirac { rate: 1.0, size: a },
            }),
            (Measure::P, SubordinatorSpec::CpExp { c, lambda }) => Ok(Self {
                rho,
                floor: 0.0,
                kind: VolKind::HomCpExp { rate: c / lambda, size_rate: lambda },
            }),
            (Measure::P, SubordinatorSpec::TemperedStable { c, lambda, alpha_ts }) => {
                let eps = require_epsilon(ts_epsilon)?;
                let sampler = TsSampler::build(eps, lambda, -1.0 - alpha_ts)?;
                let rate = c * sampler.mass;
                let drift = small_jump_drift(c, lambda, alpha_ts, eps)?;
                Ok(Self {
                    rho,
                    floor: drift / rho,
                    kind: VolKind::HomTs { rate, sampler },
                })
            }
            (Measure::Q(mc), SubordinatorSpec::Dirac { a }) => {
                let i0 = (mc.theta2 * a).exp();
                let i1 = rho * mc.beta2 / a;
                Ok(Self { rho, floor: 0.0, kind: VolKind::ThinDirac { i0, i1, size: a } })
            }
            (Measure::Q(mc), SubordinatorSpec::CpExp { c, lambda }) => {
                let eta = lambda - mc.theta2;
                let i0 = c / eta;
                let i1 = rho * mc.beta2 * eta / 2.0;
                let k = if mc.beta2 > 0.0 {
                    rho * mc.beta2 / sub.cumulant_deriv(mc.theta2, 2)?
                } else {
                    0.0
                };
                Ok(Self { rho, floor: 0.0, kind: VolKind::ThinCpExp { i0, i1, eta, k } })
            }
            (Measure::Q(mc), SubordinatorSpec::TemperedStable { c, lambda, alpha_ts }) => {
                let eps = require_epsilon(ts_epsilon)?;
                let eta = lambda - mc.theta2;
                let base = TsSampler::build(eps, eta, -1.0 - alpha_ts)?;
                let tilted = TsSampler::build(eps, eta, -alpha_ts)?;
                let k = if mc.beta2 > 0.0 {
                    rho * mc.beta2 / sub.cumulant_deriv(mc.theta2, 2)?
                } else {
                    0.0
                };
                // Small jumps keep their (tilted) compensator as drift; the
                // state-dependent part of the small-jump compensator is
                // O(eps^{2 - alpha}) and is dropped with the truncation.
                let drift = small_jump_drift(c, eta, alpha_ts, eps)?;
                Ok(Self {
                    rho,
                    floor: drift / rho,
                    kind: VolKind::ThinTs { c, k, base, tilted },
                })
            }
        }
    }

    /// Intensity of the pricing-measure jump process at squared volatility
    /// `sigma2` (thinning target).
    fn q_intensity(&self, sigma2: f64) -> f64 {
        match &self.kind {
            VolKind::ThinDirac { i0, i1, .. } | VolKind::ThinCpExp { i0, i1, .. } => {
                i0 + i1 * sigma2
            }
            VolKind::ThinTs { c, k, base, tilted } => {
                c * (base.mass + k * sigma2 * tilted.mass)
            }
            _ => unreachable!("q_intensity is only used for thinning kinds"),
        }
    }

    fn simulate(&self, sigma2_0: f64, horizon: f64, rng: &mut ChaCha8Rng) -> Result<VolPath> {
        let mut path = VolPath {
            sigma2_0,
            rho: self.rho,
            floor: self.floor,
            jumps: Vec::new(),
            horizon,
        };
        if horizon == 0.0 {
            return Ok(path);
        }
        match &self.kind {
            VolKind::Null => {}
            VolKind::HomDirac { rate, size } => {
                self.homogeneous(&mut path, *rate, |_rng| Ok(*size), rng)?
            }
            VolKind::HomCpExp { rate, size_rate } => {
                let sr = *size_rate;
                self.homogeneous(&mut path, *rate, |rng| Ok(exp_draw(rng, sr)), rng)?
            }
            VolKind::HomTs { rate, sampler } => {
                self.homogeneous(&mut path, *rate, |rng| sampler.sample(rng), rng)?
            }
            VolKind::ThinDirac { size, .. } => {
                let size = *size;
                self.thinning(&mut path, move |_rng, _s2| Ok(size), rng)?
            }
            VolKind::ThinCpExp { eta, k, .. } => {
                let (eta, k) = (*eta, *k);
                self.thinning(
                    &mut path,
                    move |rng, s2| {
                        // Density ~ e^{-eta z} (1 + k s2 z): an exponential
                        // mixed with its square tilt, weights m1 = 1/eta,
                        // m2 = k s2 / eta^2.
                        let w_tilt = (k * s2 / eta) / (1.0 + k * s2 / eta);
                        if rng.random::<f64>() < w_tilt {
                            Ok(exp_draw(rng, eta) + exp_draw(rng, eta))
                        } else {
                            Ok(exp_draw(rng, eta))
                        }
                    },
                    rng,
                )?
            }
            VolKind::ThinTs { k, base, tilted, .. } => {
                let k = *k;
                let base = base.clone();
                let tilted = tilted.clone();
                self.thinning(
                    &mut path,
                    move |rng, s2| {
                        let w_tilt =
                            k * s2 * tilted.mass / (base.mass + k * s2 * tilted.mass);
                        if rng.random::<f64>() < w_tilt {
                            tilted.sample(rng)
                        } else {
                            base.sample(rng)
                        }
                    },
                    rng,
                )?
            }
        }
        Ok(path)
    }

    /// Homogeneous Poisson arrivals at `rate` with i.i.d. sizes.
    fn homogeneous<S>(
        &self,
        path: &mut VolPath,
        rate: f64,
        mut size: S,
        rng: &mut ChaCha8Rng,
    ) -> Result<()>
    where
        S: FnMut(&mut ChaCha8Rng) -> Result<f64>,
    {
        if rate <= 0.0 {
            return Ok(());
        }
        let mut t = 0.0;
        let mut value = path.sigma2_0;
        loop {
            let dt = exp_draw(rng, rate);
            let t_next = t + dt;
            if t_next >= path.horizon {
                return Ok(());
            }
            let decayed = path.floor + (value - path.floor) * (-self.rho * dt).exp();
            let jump = size(rng)?;
            value = decayed + jump;
            path.jumps.push(JumpRecord { t: t_next, size: jump, value_after: value });
            t = t_next;
        }
    }

    /// Ogata-style thinning with the dominating rate re-evaluated at every
    /// event or rejected proposal. Between events `sigma^2` relaxes
    /// monotonically towards the floor, so the intensity evaluated at the
    /// interval's extreme volatility dominates.
    fn thinning<S>(
        &self,
        path: &mut VolPath,
        mut size: S,
        rng: &mut ChaCha8Rng,
    ) -> Result<()>
    where
        S: FnMut(&mut ChaCha8Rng, f64) -> Result<f64>,
    {
        let mut s = 0.0;
        let mut value = path.sigma2_0;
        loop {
            let bound = self.q_intensity(value.max(path.floor));
            if bound <= 0.0 {
                return Ok(());
            }
            let proposal = s + exp_draw(rng, bound);
            if proposal >= path.horizon {
                return Ok(());
            }
            let decayed = path.floor + (value - path.floor) * (-self.rho * (proposal - s)).exp();
            let accept = self.q_intensity(decayed) / bound;
            if rng.random::<f64>() <= accept {
                let jump = size(rng, decayed)?;
                value = decayed + jump;
                path.jumps.push(JumpRecord { t: proposal, size: jump, value_after: value });
            } else {
                value = decayed;
            }
            s = proposal;
        }
    }
}

fn require_epsilon(ts_epsilon: Option<f64>) -> Result<f64> {
    match ts_epsilon {
        Some(eps) if eps > 0.0 => Ok(eps),
        _ => Err(Error::UnsupportedModel(
            "tempered-stable simulation requires an explicit jump-truncation threshold ts_epsilon"
                .to_string(),
        )),
    }
}

/// Compensating drift of the truncated small jumps,
/// `c int_0^eps z^{-alpha} e^{-eta z} dz`, computed after the substitution
/// `z = eps w^{1/(1-alpha)}` which removes the endpoint singularity.
fn small_jump_drift(c: f64, eta: f64, alpha_ts: f64, eps: f64) -> Result<f64> {
    let q = 1.0 - alpha_ts;
    let scale = c * eps.powf(q) / q;
    quadrature::adaptive(
        |w| (-eta * eps * w.powf(1.0 / q)).exp(),
        0.0,
        1.0,
        1e-13,
        1e-11,
    )
    .map(|v| scale * v)
}

// ---------------------------------------------------------------------------
// Conditional Gaussian sampling of X.

/// `int_{s0}^{s1} sigma^2(u) e^{-2 abar (u1 - u)} du` for one inter-jump
/// piece with `sigma^2(u) = floor + a_coef e^{-rho (u - s0)}`, `u1 >= s1`.
fn piece_variance(
    a_coef: f64,
    floor: f64,
    rho: f64,
    two_abar: f64,
    s0: f64,
    s1: f64,
    u1: f64,
) -> f64 {
    let delta = s1 - s0;
    let x = two_abar - rho;
    let decaying = if (x * delta).abs() < 1e-9 {
        a_coef * (-two_abar * (u1 - s0)).exp() * delta * (1.0 + 0.5 * x * delta)
    } else {
        a_coef * ((-two_abar * (u1 - s1) - rho * delta).exp() - (-two_abar * (u1 - s0)).exp()) / x
    };
    let floor_part = floor * (-two_abar * (u1 - s1)).exp() * expm1_ratio(two_abar, delta);
    decaying + floor_part
}

/// Conditional variance of `X(u1) | X(u0)` given the volatility path:
/// the sum of [`piece_variance`] over the jump partition of `[u0, u1]`.
fn x_conditional_variance(vol: &VolPath, u0: f64, u1: f64, two_abar: f64) -> f64 {
    if u1 <= u0 {
        return 0.0;
    }
    let mut var = 0.0;
    let mut s0 = u0;
    let mut value = vol.sigma2_at(u0);
    let start = vol.jumps.partition_point(|j| j.t <= u0);
    for j in &vol.jumps[start..] {
        if j.t >= u1 {
            break;
        }
        var += piece_variance(value - vol.floor, vol.floor, vol.rho, two_abar, s0, j.t, u1);
        s0 = j.t;
        value = j.value_after;
    }
    var + piece_variance(value - vol.floor, vol.floor, vol.rho, two_abar, s0, u1, u1)
}

/// Exact Gaussian update of the factor over `[u0, u1]`:
/// `X(u1) = X(u0) e^{-abar h} + theta1 (1 - e^{-abar h}) / abar + N(0, v)`.
fn x_step(
    x0: f64,
    u0: f64,
    u1: f64,
    alpha_bar: f64,
    theta1: f64,
    vol: &VolPath,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let h = u1 - u0;
    if h <= 0.0 {
        return x0;
    }
    let mean = x0 * (-alpha_bar * h).exp() + theta1 * expm1_ratio(alpha_bar, h);
    let var = x_conditional_variance(vol, u0, u1, 2.0 * alpha_bar);
    mean + var.max(0.0).sqrt() * normal_draw(rng)
}

/// Sample the factor at the requested observation times, given a volatility
/// path. Under `P` the reversion speed is `alpha` toward level zero; under
/// `Q` it is `alpha (1 - beta1)` toward `theta1 / (alpha (1 - beta1))`.
pub fn simulate_x_given_vol(
    params: &ModelParams,
    measure: &Measure,
    x0: f64,
    vol: &VolPath,
    obs: &[f64],
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let mc = measure.change();
    let alpha_bar = params.alpha * (1.0 - mc.beta1);
    let mut out = Vec::with_capacity(obs.len());
    let mut x = x0;
    let mut u = 0.0;
    for &t in obs {
        x = x_step(x, u, t, alpha_bar, mc.theta1, vol, rng);
        u = t;
        out.push(x);
    }
    out
}

/// Simulate volatility paths over `[0, config.horizon]` starting from
/// `sigma2_0`, one independent stream per path index.
pub fn simulate_vol(
    params: &ModelParams,
    measure: &Measure,
    sigma2_0: f64,
    config: &PathConfig,
) -> Result<Vec<VolPath>> {
    config.validate()?;
    measure.validate(&params.sub)?;
    let sim = VolSim::build(params, measure, config.ts_epsilon)?;
    let tag = match measure {
        Measure::P => STREAM_VOL_P,
        Measure::Q(_) => STREAM_VOL_Q,
    };
    (0..config.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(config.seed, i as u64, tag);
            sim.simulate(sigma2_0, config.horizon, &mut rng)
        })
        .collect()
}

fn payoff(
    params: &ModelParams,
    model: SpotModel,
    maturity: f64,
    x_at_maturity: f64,
) -> f64 {
    match model {
        SpotModel::Arithmetic => params.seasonal_a.at(maturity) + x_at_maturity,
        SpotModel::Geometric => params.seasonal_g.at(maturity) * x_at_maturity.exp(),
    }
}

fn summarize(values: &[f64], config: &PathConfig) -> SimEstimate {
    let n = values.len();
    let mean = pairwise_sum(values) / n as f64;
    let std_error = if n > 1 {
        let devs: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
        (pairwise_sum(&devs) / ((n - 1) as f64 * n as f64)).sqrt()
    } else {
        0.0
    };
    SimEstimate { mean, std_error, n_paths: n, seed: config.seed }
}

/// Monte Carlo estimate of the forward `E[S(T) | state]` under the given
/// measure.
pub fn estimate_forward(
    params: &ModelParams,
    measure: &Measure,
    state: &MarketState,
    maturity: f64,
    model: SpotModel,
    config: &PathConfig,
) -> Result<SimEstimate> {
    config.validate()?;
    state.validate()?;
    measure.validate(&params.sub)?;
    let tau = maturity - state.t;
    if tau < 0.0 {
        return Err(Error::InvalidInput(format!(
            "maturity {maturity} precedes current time {}",
            state.t
        )));
    }
    let sim = VolSim::build(params, measure, config.ts_epsilon)?;
    let tag = match measure {
        Measure::P => STREAM_VOL_P,
        Measure::Q(_) => STREAM_VOL_Q,
    };
    let values: Vec<f64> = (0..config.n_paths)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let mut vol_rng = stream_rng(config.seed, i as u64, tag);
            let vol = sim.simulate(state.sigma2, tau, &mut vol_rng)?;
            let mut gauss = stream_rng(config.seed, i as u64, STREAM_GAUSS);
            let x = simulate_x_given_vol(params, measure, state.x, &vol, &[tau], &mut gauss)[0];
            Ok(payoff(params, model, maturity, x))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(&values, config))
}

/// Paired-path estimate of the risk premium `E_Q[S(T)] - E_P[S(T)]`:
/// the Brownian component uses common random numbers across the two
/// measures, the jump components use independent streams.
pub fn estimate_premium(
    params: &ModelParams,
    mc: &MeasureChange,
    state: &MarketState,
    tau: f64,
    model: SpotModel,
    config: &PathConfig,
) -> Result<SimEstimate> {
    config.validate()?;
    state.validate()?;
    mc.validate(&params.sub)?;
    if tau < 0.0 {
        return Err(Error::InvalidInput(format!("tau must be >= 0, got {tau}")));
    }
    let maturity = state.t + tau;
    let sim_q = VolSim::build(params, &Measure::Q(*mc), config.ts_epsilon)?;
    let sim_p = VolSim::build(params, &Measure::P, config.ts_epsilon)?;
    let q_measure = Measure::Q(*mc);
    let diffs: Vec<f64> = (0..config.n_paths)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let mut vol_rng_q = stream_rng(config.seed, i as u64, STREAM_VOL_Q);
            let vol_q = sim_q.simulate(state.sigma2, tau, &mut vol_rng_q)?;
            let mut vol_rng_p = stream_rng(config.seed, i as u64, STREAM_VOL_P);
            let vol_p = sim_p.simulate(state.sigma2, tau, &mut vol_rng_p)?;
            // Common random numbers: both legs consume the same Gaussians.
            let mut gauss_q = stream_rng(config.seed, i as u64, STREAM_GAUSS);
            let mut gauss_p = gauss_q.clone();
            let xq =
                simulate_x_given_vol(params, &q_measure, state.x, &vol_q, &[tau], &mut gauss_q)[0];
            let xp =
                simulate_x_given_vol(params, &Measure::P, state.x, &vol_p, &[tau], &mut gauss_p)[0];
            Ok(payoff(params, model, maturity, xq) - payoff(params, model, maturity, xp))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(&diffs, config))
}

/// One dumped path sample row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathSample {
    pub path_id: usize,
    pub t: f64,
    pub x: f64,
    pub sigma2: f64,
}

/// Simulate `n_dump` paths and return `(x, sigma^2)` sampled on the
/// configured observation grid.
pub fn dump_paths(
    params: &ModelParams,
    measure: &Measure,
    state: &MarketState,
    config: &PathConfig,
    n_dump: usize,
) -> Result<Vec<PathSample>> {
    config.validate()?;
    state.validate()?;
    measure.validate(&params.sub)?;
    let sim = VolSim::build(params, measure, config.ts_epsilon)?;
    let tag = match measure {
        Measure::P => STREAM_VOL_P,
        Measure::Q(_) => STREAM_VOL_Q,
    };
    let mut rows = Vec::new();
    for i in 0..n_dump.min(config.n_paths) {
        let mut vol_rng = stream_rng(config.seed, i as u64, tag);
        let vol = sim.simulate(state.sigma2, config.horizon, &mut vol_rng)?;
        let mut gauss = stream_rng(config.seed, i as u64, STREAM_GAUSS);
        let xs = simulate_x_given_vol(params, measure, state.x, &vol, &config.obs_grid, &mut gauss);
        for (&t, &x) in config.obs_grid.iter().zip(&xs) {
            rows.push(PathSample { path_id: i, t, x, sigma2: vol.sigma2_at(t) });
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Analytic companions for law checks.

/// Pricing-measure jump intensity `I0 + I1 sigma^2` for finite-activity
/// subordinators: `I0 = int e^{theta2 z} l(dz)`,
/// `I1 = rho beta2 kappa'(theta2) / kappa''(theta2)`.
pub fn q_jump_intensity(
    params: &ModelParams,
    mc: &MeasureChange,
    sigma2: f64,
) -> Result<f64> {
    let sim = VolSim::build(params, &Measure::Q(*mc), None)?;
    match sim.kind {
        VolKind::ThinDirac { .. } | VolKind::ThinCpExp { .. } => Ok(sim.q_intensity(sigma2)),
        VolKind::Null => Ok(0.0),
        _ => Err(Error::UnsupportedModel(
            "analytic Q intensity requires a finite-activity subordinator".to_string(),
        )),
    }
}

/// Mean jump size under the pricing measure at a frozen squared volatility,
/// from the tilted density `~ e^{theta2 z} (1 + k z sigma^2) l(dz)`.
pub fn tilted_jump_mean(
    params: &ModelParams,
    mc: &MeasureChange,
    sigma2: f64,
) -> Result<f64> {
    match params.sub {
        SubordinatorSpec::Dirac { a } => Ok(a),
        SubordinatorSpec::CpExp { c, lambda } => {
            if c == 0.0 {
                return Err(Error::Domain("null subordinator has no jumps".to_string()));
            }
            let eta = lambda - mc.theta2;
            let k = if mc.beta2 > 0.0 {
                params.rho * mc.beta2 / params.sub.cumulant_deriv(mc.theta2, 2)?
            } else {
                0.0
            };
            let w_tilt = (k * sigma2 / eta) / (1.0 + k * sigma2 / eta);
            Ok((1.0 - w_tilt) / eta + w_tilt * 2.0 / eta)
        }
        SubordinatorSpec::TemperedStable { .. } => Err(Error::UnsupportedModel(
            "analytic tilted mean implemented for finite-activity families".to_string(),
        )),
    }
}

/// Draw one jump size from the tilted law at frozen `sigma2`
/// (finite-activity families).
pub fn sample_tilted_jump(
    params: &ModelParams,
    mc: &MeasureChange,
    sigma2: f64,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    match params.sub {
        SubordinatorSpec::Dirac { a } => Ok(a),
        SubordinatorSpec::CpExp { c, lambda } => {
            if c == 0.0 {
                return Err(Error::Domain("null subordinator has no jumps".to_string()));
            }
            let eta = lambda - mc.theta2;
            let k = if mc.beta2 > 0.0 {
                params.rho * mc.beta2 / params.sub.cumulant_deriv(mc.theta2, 2)?
            } else {
                0.0
            };
            let w_tilt = (k * sigma2 / eta) / (1.0 + k * sigma2 / eta);
            if rng.random::<f64>() < w_tilt {
                Ok(exp_draw(rng, eta) + exp_draw(rng, eta))
            } else {
                Ok(exp_draw(rng, eta))
            }
        }
        SubordinatorSpec::TemperedStable { .. } => Err(Error::UnsupportedModel(
            "tilted sampling exposed for finite-activity families".to_string(),
        )),
    }
}

/// A fresh stream for ad-hoc draws tied to `(seed, index)`; used by the
/// law-check tests.
pub fn test_stream(seed: u64, index: u64) -> ChaCha8Rng {
    stream_rng(seed, index, 99)
}

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let (n1, n2) = (xs.len(), ys.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n1 && j < n2 {
        let x = xs[i];
        let y = ys[j];
        if x <= y {
            i += 1;
        }
        if y <= x {
            j += 1;
        }
        d = d.max((i as f64 / n1 as f64 - j as f64 / n2 as f64).abs());
    }
    let n_eff = (n1 as f64 * n2 as f64) / ((n1 + n2) as f64);
    let lambda = (n_eff.sqrt() + 0.12 + 0.11 / n_eff.sqrt()) * d;
    if lambda < 0.1 {
        return (d, 1.0);
    }
    let mut p = 0.0;
    for k in 1..=100 {
        let term = 2.0 * (-1.0_f64).powi(k - 1) * (-2.0 * (k as f64 * lambda).powi(2)).exp();
        p += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    (d, p.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::admissibility::Seasonal;
    use approx::assert_relative_eq;

    fn base_params() -> ModelParams {
        ModelParams::new(0.127, 1.11, SubordinatorSpec::cp_exp(0.4, 2.0).unwrap()).unwrap()
    }

    fn state() -> MarketState {
        MarketState::new(0.0, 2.5, 0.0625)
    }

    #[test]
    fn null_subordinator_decays_exactly() {
        let p = ModelParams::new(0.127, 1.11, SubordinatorSpec::CpExp { c: 0.0, lambda: 2.0 })
            .unwrap();
        let cfg = PathConfig::new(4, 7, 10.0);
        let paths = simulate_vol(&p, &Measure::P, 0.0625, &cfg).unwrap();
        for path in paths {
            assert_eq!(path.jump_count(), 0);
            assert_relative_eq!(
                path.sigma2_at(10.0),
                0.0625 * (-11.1_f64).exp(),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn p_measure_vol_mean_matches_explicit_solution() {
        let p = base_params();
        let cfg = PathConfig::new(20_000, 12345, 10.0);
        let paths = simulate_vol(&p, &Measure::P, 0.0625, &cfg).unwrap();
        let vals: Vec<f64> = paths.iter().map(|v| v.sigma2_at(10.0)).collect();
        let est = summarize(&vals, &cfg);
        // sigma2(0) e^{-rho T} + kappa'(0)(1 - e^{-rho T})/rho
        let expected = 0.0625 * (-11.1_f64).exp() + 0.1 * (1.0 - (-11.1_f64).exp()) / 1.11;
        assert_relative_eq!(expected, 0.09008967313971443, max_relative = 1e-12);
        assert!(
            (est.mean - expected).abs() <= 3.0 * est.std_error,
            "mean {} vs {} (se {})",
            est.mean,
            expected,
            est.std_error
        );
    }

    #[test]
    fn deterministic_given_seed_and_worker_count() {
        let p = base_params();
        let cfg = PathConfig::new(500, 99, 30.0);
        let run = || {
            estimate_forward(&p, &Measure::P, &state(), 30.0, SpotModel::Geometric, &cfg).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let quad = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let c = single.install(run);
        let d = quad.install(run);
        assert_eq!(c.mean.to_bits(), d.mean.to_bits());
        assert_eq!(a.mean.to_bits(), c.mean.to_bits());
    }

    #[test]
    fn arithmetic_degenerate_run_has_zero_error() {
        // Null subordinator and zero initial volatility: S(T) is deterministic.
        let p = ModelParams::new(0.127, 1.11, SubordinatorSpec::CpExp { c: 0.0, lambda: 2.0 })
            .unwrap();
        let s = MarketState::new(0.0, 2.5, 0.0);
        let cfg = PathConfig::new(100, 5, 20.0);
        let est =
            estimate_forward(&p, &Measure::P, &s, 20.0, SpotModel::Arithmetic, &cfg).unwrap();
        assert_eq!(est.std_error, 0.0);
        assert_relative_eq!(
            est.mean,
            crate::pricing::forward_arithmetic(&p, &MeasureChange::p(), &s, 20.0),
            max_relative = 1e-12
        );
    }

    #[test]
    fn x_variance_matches_quadrature_and_euler() {
        // Constant sigma^2 (no jumps in the window): the per-step variance
        // has the closed form sigma^2 (1 - e^{-2 abar h}) / (2 abar).
        let vol = VolPath { sigma2_0: 0.09, rho: 1.11, floor: 0.0, jumps: vec![], horizon: 5.0 };
        let constant_vol = VolPath { sigma2_0: 0.09, rho: 0.0, floor: 0.0, jumps: vec![], horizon: 5.0 };
        let abar = 0.127;
        let v = x_conditional_variance(&constant_vol, 0.0, 5.0, 2.0 * abar);
        assert_relative_eq!(
            v,
            0.09 * (1.0 - (-2.0 * abar * 5.0_f64).exp()) / (2.0 * abar),
            max_relative = 1e-12
        );
        // Decaying sigma^2 with jumps: compare against direct quadrature.
        let vol2 = VolPath {
            sigma2_0: 0.0625,
            rho: 1.11,
            floor: 0.02,
            jumps: vec![
                JumpRecord { t: 1.0, size: 0.5, value_after: 0.0 },
                JumpRecord { t: 3.2, size: 0.25, value_after: 0.0 },
            ],
            horizon: 5.0,
        };
        // Fill value_after consistently.
        let mut vol2 = vol2;
        let mut v0 = vol2.sigma2_0;
        let mut t0 = 0.0;
        for j in vol2.jumps.iter_mut() {
            let decayed = 0.02 + (v0 - 0.02) * (-1.11 * (j.t - t0)).exp();
            j.value_after = decayed + j.size;
            v0 = j.value_after;
            t0 = j.t;
        }
        let got = x_conditional_variance(&vol2, 0.3, 4.7, 2.0 * abar);
        let by_quad = quadrature::adaptive(
            |u| vol2.sigma2_at(u) * (-2.0 * abar * (4.7 - u)).exp(),
            0.3,
            4.7,
            1e-13,
            1e-12,
        )
        .unwrap();
        assert_relative_eq!(got, by_quad, max_relative = 1e-10);
        let _ = vol;
    }

    #[test]
    fn geometric_forward_under_p_within_three_se() {
        let p = base_params();
        let cfg = PathConfig::new(20_000, 2024, 30.0);
        let est =
            estimate_forward(&p, &Measure::P, &state(), 30.0, SpotModel::Geometric, &cfg).unwrap();
        let analytic = crate::pricing::forward_geometric_p(&p, &state(), 30.0).unwrap();
        assert!(
            (est.mean - analytic).abs() <= 3.0 * est.std_error,
            "mc {} vs analytic {} (se {})",
            est.mean,
            analytic,
            est.std_error
        );
    }

    #[test]
    fn premium_estimate_zero_under_p_parameters() {
        let p = base_params();
        let cfg = PathConfig::new(5_000, 31, 20.0);
        let est = estimate_premium(
            &p,
            &MeasureChange::p(),
            &state(),
            20.0,
            SpotModel::Geometric,
            &cfg,
        )
        .unwrap();
        assert!(est.mean.abs() <= 3.0 * est.std_error, "mean {} se {}", est.mean, est.std_error);
    }

    #[test]
    fn arithmetic_premium_estimate_matches_closed_form() {
        let p = base_params();
        let mc = MeasureChange::new(0.3, 0.0, 0.0, 0.0);
        let cfg = PathConfig::new(4_000, 77, 360.0);
        let est =
            estimate_premium(&p, &mc, &state(), 360.0, SpotModel::Arithmetic, &cfg).unwrap();
        let closed = crate::pricing::premium_arithmetic(&p, &mc, &state(), 360.0).value;
        assert_relative_eq!(closed, 2.3622047244094486, max_relative = 1e-9);
        assert!(
            (est.mean - closed).abs() <= 3.0 * est.std_error.max(1e-12),
            "mc {} vs closed {} (se {})",
            est.mean,
            closed,
            est.std_error
        );
    }

    #[test]
    fn q_reduces_to_p_in_law_at_zero_change() {
        let p = base_params();
        let n = 4_000;
        let cfg = PathConfig::new(n, 13, 10.0);
        let p_paths = simulate_vol(&p, &Measure::P, 0.0625, &cfg).unwrap();
        let q_paths = simulate_vol(&p, &Measure::Q(MeasureChange::p()), 0.0625, &cfg).unwrap();
        let a: Vec<f64> = p_paths.iter().map(|v| v.sigma2_at(10.0)).collect();
        let b: Vec<f64> = q_paths.iter().map(|v| v.sigma2_at(10.0)).collect();
        let (_d, pval) = ks_two_sample(&a, &b);
        assert!(pval > 0.01, "KS p-value {pval}");
    }

    #[test]
    fn q_jump_count_matches_compensator() {
        let p = base_params();
        let mc = MeasureChange::new(0.0, -5.0, 0.0, 0.45);
        let horizon = 10.0;
        let n = 20_000;
        let cfg = PathConfig::new(n, 101, horizon);
        let paths = simulate_vol(&p, &Measure::Q(mc), 0.0625, &cfg).unwrap();
        let counts: Vec<f64> = paths.iter().map(|v| v.jump_count() as f64).collect();
        let est = summarize(&counts, &cfg);
        // Expected count: int_0^T I0 + I1 E[sigma^2(s)] ds with the
        // pricing-measure mean-reversion of the volatility.
        let rb = p.rho * (1.0 - mc.beta2);
        let k1 = p.sub.cumulant_deriv(mc.theta2, 1).unwrap();
        let e_sigma2 =
            |s: f64| 0.0625 * (-rb * s).exp() + k1 / rb * (1.0 - (-rb * s).exp());
        let expected = quadrature::adaptive(
            |s| q_jump_intensity(&p, &mc, e_sigma2(s)).unwrap(),
            0.0,
            horizon,
            1e-10,
            1e-9,
        )
        .unwrap();
        assert!(
            (est.mean - expected).abs() <= 3.0 * est.std_error,
            "jumps {} vs {} (se {})",
            est.mean,
            expected,
            est.std_error
        );
    }

    #[test]
    fn tilted_jump_sizes_match_mixture_mean() {
        let p = base_params();
        let mc = MeasureChange::new(0.0, -5.0, 0.0, 0.45);
        let sigma2 = 0.09;
        let analytic = tilted_jump_mean(&p, &mc, sigma2).unwrap();
        let mut rng = test_stream(7, 0);
        let n = 40_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| sample_tilted_jump(&p, &mc, sigma2, &mut rng).unwrap())
            .collect();
        let cfg = PathConfig::new(n, 7, 1.0);
        let est = summarize(&draws, &cfg);
        assert!(
            (est.mean - analytic).abs() <= 3.0 * est.std_error,
            "empirical {} vs analytic {} (se {})",
            est.mean,
            analytic,
            est.std_error
        );
    }

    #[test]
    fn tempered_stable_requires_epsilon() {
        let p =
            ModelParams::new(0.127, 1.11, SubordinatorSpec::tempered_stable(0.5, 3.0, 0.5).unwrap())
                .unwrap();
        let cfg = PathConfig::new(10, 1, 5.0);
        match simulate_vol(&p, &Measure::P, 0.0625, &cfg) {
            Err(Error::UnsupportedModel(_)) => {}
            other => panic!("expected UnsupportedModel, got {other:?}"),
        }
    }

    #[test]
    fn tempered_stable_truncated_mean_is_compensated() {
        // With the compensating drift, E[sigma2(T)] matches the
        // untruncated formula sigma2(0) e^{-rho T} + kappa'(0)(1-e^{-rho T})/rho.
        let sub = SubordinatorSpec::tempered_stable(0.5, 3.0, 0.5).unwrap();
        let p = ModelParams::new(0.127, 1.11, sub).unwrap();
        let mut cfg = PathConfig::new(20_000, 404, 6.0);
        cfg.ts_epsilon = Some(1e-3);
        let paths = simulate_vol(&p, &Measure::P, 0.0625, &cfg).unwrap();
        let vals: Vec<f64> = paths.iter().map(|v| v.sigma2_at(6.0)).collect();
        let est = summarize(&vals, &cfg);
        let k1 = sub.cumulant_deriv(0.0, 1).unwrap();
        let expected =
            0.0625 * (-1.11 * 6.0_f64).exp() + k1 / 1.11 * (1.0 - (-1.11 * 6.0_f64).exp());
        assert!(
            (est.mean - expected).abs() <= 3.0 * est.std_error + 2e-3,
            "mean {} vs {} (se {})",
            est.mean,
            expected,
            est.std_error
        );
    }

    #[test]
    fn tempered_stable_q_thinning_runs() {
        let sub = SubordinatorSpec::tempered_stable(0.5, 3.0, 0.5).unwrap();
        let p = ModelParams::new(0.127, 1.11, sub).unwrap();
        let mut cfg = PathConfig::new(200, 11, 5.0);
        cfg.ts_epsilon = Some(1e-3);
        let mc = MeasureChange::new(0.0, -2.0, 0.0, 0.3);
        let paths = simulate_vol(&p, &Measure::Q(mc), 0.0625, &cfg).unwrap();
        assert!(paths.iter().any(|v| v.jump_count() > 0));
        for v in &paths {
            for j in &v.jumps {
                assert!(j.size >= 1e-3);
            }
        }
    }

    #[test]
    fn premium_estimate_sign_matches_sigma_for_figure_parameters() {
        // Esscher panel with a strong negative level shift: the premium is
        // decisively negative and the paired estimate agrees in sign with
        // the Sigma diagnostic wherever it clears the noise.
        let p = base_params();
        let mc = MeasureChange::new(-2.0, -50.0, 0.0, 0.0);
        let cfg = PathConfig::new(4_000, 99, 30.0);
        let est =
            estimate_premium(&p, &mc, &state(), 30.0, SpotModel::Geometric, &cfg).unwrap();
        let ric = crate::riccati::RiccatiSolution::solve(&p, &mc, 301.0, 1e-10).unwrap();
        let sigma = crate::pricing::sigma_value(&p, &mc, &state(), 30.0, &ric).unwrap();
        assert!(sigma < 0.0);
        assert!(est.mean.abs() > 3.0 * est.std_error, "signal below noise");
        assert_eq!(est.mean.signum(), sigma.signum());
        let analytic = crate::pricing::premium_geometric(&p, &mc, &state(), 30.0, &ric).unwrap();
        assert!(
            (est.mean - analytic).abs() <= 3.0 * est.std_error,
            "mc {} vs analytic {} (se {})",
            est.mean,
            analytic,
            est.std_error
        );
        // The long end of this panel stays negative.
        let far = crate::pricing::premium_geometric(&p, &mc, &state(), 300.0, &ric).unwrap();
        assert!(far < 0.0);
    }

    #[test]
    fn ks_statistic_sanity() {
        let a: Vec<f64> = (0..1000).map(|i| i as f64 / 1000.0).collect();
        let (d, p) = ks_two_sample(&a, &a);
        assert!(d <= 1e-12);
        assert!(p > 0.999);
        let b: Vec<f64> = a.iter().map(|x| x + 0.5).collect();
        let (d2, p2) = ks_two_sample(&a, &b);
        assert!(d2 >= 0.5);
        assert!(p2 < 1e-6);
    }

    #[test]
    fn seasonal_payoffs_use_maturity_time() {
        let p = ModelParams::new(0.127, 1.11, SubordinatorSpec::CpExp { c: 0.0, lambda: 2.0 })
            .unwrap()
            .with_seasonals(
                Seasonal::Sin { level: 10.0, amplitude: 3.0, period_days: 360.0 },
                Seasonal::constant(1.0),
            )
            .unwrap();
        let s = MarketState::new(0.0, 0.0, 0.0);
        let cfg = PathConfig::new(10, 3, 90.0);
        let est =
            estimate_forward(&p, &Measure::P, &s, 90.0, SpotModel::Arithmetic, &cfg).unwrap();
        assert_relative_eq!(est.mean, 13.0, max_relative = 1e-12); // quarter period peak
    }
}
