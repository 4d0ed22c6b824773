//! Batch command-line front end.
//!
//! One JSON configuration document drives every command; individual CLI
//! flags override the corresponding fields. Validation always runs before
//! any computation, and output files are written atomically (temp file +
//! rename) with a re-parse check, so invalid configs never leave partial
//! artifacts behind.
//!
//! Exit codes: 0 success, 2 validation failure, 3 numerical failure.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::admissibility::{
    beta_max, check_assumption_p, in_db, lambda_fn, u_min, u_zero, BetaMax, MarketState,
    MeasureChange, ModelParams, Seasonal,
};
use crate::error::{Error, Result};
use crate::mc::{self, Measure, PathConfig};
use crate::pricing::{self, SpotModel};
use crate::riccati::{self, RiccatiSolution};
use crate::subordinators::SubordinatorSpec;

/// Uniform time-to-maturity grid specification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauGrid {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl Default for TauGrid {
    /// Daily points over one year of maturities.
    fn default() -> Self {
        Self { start: 0.0, stop: 360.0, points: 361 }
    }
}

impl TauGrid {
    pub fn values(&self) -> Vec<f64> {
        if self.points <= 1 {
            return vec![self.start];
        }
        (0..self.points)
            .map(|k| self.start + (self.stop - self.start) * k as f64 / (self.points - 1) as f64)
            .collect()
    }
}

/// Rectangular `(u1, u2)` grid for vector-field dumps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldGrid {
    pub u1_max: f64,
    pub u2_max: f64,
    pub points: usize,
}

impl Default for FieldGrid {
    fn default() -> Self {
        Self { u1_max: 1.5, u2_max: 1.0, points: 21 }
    }
}

/// Monte Carlo options of the `simulate` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_paths: usize,
    pub seed: u64,
    #[serde(default)]
    pub ts_epsilon: Option<f64>,
    /// Number of paths echoed to the optional dump CSV.
    #[serde(default)]
    pub dump_paths: Option<usize>,
}

impl Default for McConfig {
    fn default() -> Self {
        Self { n_paths: 100_000, seed: 42, ts_epsilon: None, dump_paths: None }
    }
}

fn default_model() -> ModelParams {
    ModelParams {
        alpha: 0.127,
        rho: 1.11,
        sub: SubordinatorSpec::CpExp { c: 0.4, lambda: 2.0 },
        seasonal_a: Seasonal::constant(0.0),
        seasonal_g: Seasonal::constant(1.0),
    }
}

fn default_state() -> MarketState {
    MarketState::new(0.0, 2.5, 0.0625)
}

fn default_true() -> bool {
    true
}
fn default_horizon() -> f64 {
    400.0
}
fn default_tol() -> f64 {
    riccati::DEFAULT_TOL
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// The single JSON configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default = "default_model")]
    pub model: ModelParams,
    #[serde(default = "MeasureChange::p")]
    pub measure: MeasureChange,
    #[serde(default = "default_state")]
    pub state: MarketState,
    /// Strict parameter validation (`Theta_L > 1`); disable for exploratory
    /// subordinators.
    #[serde(default = "default_true")]
    pub strict: bool,
    #[serde(default = "spot_model_default")]
    pub spot_model: SpotModel,
    /// Fixed-maturity time `T` for `price`/`simulate`.
    #[serde(default)]
    pub maturity: Option<f64>,
    /// Delivery period `[T1, T2]` for swap pricing.
    #[serde(default)]
    pub delivery: Option<(f64, f64)>,
    #[serde(default)]
    pub tau_grid: TauGrid,
    /// Riccati solve horizon in days.
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    /// Riccati local tolerance.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub field_grid: Option<FieldGrid>,
}

fn spot_model_default() -> SpotModel {
    SpotModel::Geometric
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config deserialises via defaults")
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::InvalidInput(format!("cannot read config {}: {e}", path.display()))
        })?;
        serde_json::from_str(&text)
            .map_err(|e| Error::InvalidInput(format!("config parse error: {e}")))
    }

    /// Full validation; runs before any computation.
    pub fn validate(&self) -> Result<()> {
        self.model.validate(self.strict)?;
        self.measure.validate(&self.model.sub)?;
        self.state.validate()?;
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidInput(format!(
                "horizon must be > 0, got {}",
                self.horizon
            )));
        }
        if !(self.tol > 0.0 && self.tol < 1e-2) {
            return Err(Error::InvalidInput(format!(
                "tol must lie in (0, 1e-2), got {}",
                self.tol
            )));
        }
        if self.mc.n_paths == 0 {
            return Err(Error::InvalidInput("mc.n_paths must be >= 1".to_string()));
        }
        if let Some((t1, t2)) = self.delivery {
            if !(self.state.t <= t1 && t1 < t2) {
                return Err(Error::InvalidInput(format!(
                    "delivery must satisfy t <= T1 < T2, got ({t1}, {t2})"
                )));
            }
        }
        if let Some(m) = self.maturity {
            if m < self.state.t {
                return Err(Error::InvalidInput(format!(
                    "maturity {m} precedes current time {}",
                    self.state.t
                )));
            }
        }
        Ok(())
    }
}

/// Flag-level overrides of individual config fields.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Mean-reversion speed of the factor (per day).
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    /// Mean-reversion speed of the squared volatility (per day).
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub rho: Option<f64>,
    /// Level shift of the factor under Q.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub theta1: Option<f64>,
    /// Esscher tilt of the subordinator under Q.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub theta2: Option<f64>,
    /// Speed-reduction fraction of the factor, in [0, 1].
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub beta1: Option<f64>,
    /// Speed-reduction fraction of the volatility, in [0, 1].
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub beta2: Option<f64>,
    /// Current factor value X(t).
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub x: Option<f64>,
    /// Current squared volatility.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub sigma2: Option<f64>,
    /// Current time in days.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub t: Option<f64>,
    /// Spot model: arithmetic or geometric.
    #[arg(long, value_parser = parse_spot_model, global = true)]
    pub model: Option<SpotModel>,
    /// Fixed maturity T in days.
    #[arg(long = "T", global = true, allow_negative_numbers = true)]
    pub maturity: Option<f64>,
    /// Delivery start T1 (use with --t2).
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub t1: Option<f64>,
    /// Delivery end T2 (use with --t1).
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub t2: Option<f64>,
    /// Number of Monte Carlo paths.
    #[arg(long, global = true)]
    pub n_paths: Option<usize>,
    /// Monte Carlo seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Riccati solve horizon in days.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub horizon: Option<f64>,
    /// Riccati local tolerance.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub tol: Option<f64>,
    /// Number of points of the tau grid.
    #[arg(long, global = true)]
    pub points: Option<usize>,
    /// Largest tau of the grid, in days.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub tau_max: Option<f64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Disable the strict Theta_L > 1 validation.
    #[arg(long, global = true)]
    pub relaxed: bool,
}

fn parse_spot_model(s: &str) -> std::result::Result<SpotModel, String> {
    match s {
        "arithmetic" | "arith" | "a" => Ok(SpotModel::Arithmetic),
        "geometric" | "geom" | "g" => Ok(SpotModel::Geometric),
        other => Err(format!("unknown spot model '{other}' (arithmetic|geometric)")),
    }
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(v) = self.alpha {
            cfg.model.alpha = v;
        }
        if let Some(v) = self.rho {
            cfg.model.rho = v;
        }
        if let Some(v) = self.theta1 {
            cfg.measure.theta1 = v;
        }
        if let Some(v) = self.theta2 {
            cfg.measure.theta2 = v;
        }
        if let Some(v) = self.beta1 {
            cfg.measure.beta1 = v;
        }
        if let Some(v) = self.beta2 {
            cfg.measure.beta2 = v;
        }
        if let Some(v) = self.x {
            cfg.state.x = v;
        }
        if let Some(v) = self.sigma2 {
            cfg.state.sigma2 = v;
        }
        if let Some(v) = self.t {
            cfg.state.t = v;
        }
        if let Some(v) = self.model {
            cfg.spot_model = v;
        }
        if let Some(v) = self.maturity {
            cfg.maturity = Some(v);
        }
        if let (Some(t1), Some(t2)) = (self.t1, self.t2) {
            cfg.delivery = Some((t1, t2));
        }
        if let Some(v) = self.n_paths {
            cfg.mc.n_paths = v;
        }
        if let Some(v) = self.seed {
            cfg.mc.seed = v;
        }
        if let Some(v) = self.horizon {
            cfg.horizon = v;
        }
        if let Some(v) = self.tol {
            cfg.tol = v;
        }
        if let Some(v) = self.points {
            cfg.tau_grid.points = v;
        }
        if let Some(v) = self.tau_max {
            cfg.tau_grid.stop = v;
        }
        if let Some(ref v) = self.output_dir {
            cfg.output_dir = v.clone();
        }
        if self.relaxed {
            cfg.strict = false;
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "affine-premia",
    version,
    about = "Forwards, swaps and risk premia for OU spot models with BNS stochastic volatility",
    allow_negative_numbers = true
)]
pub struct Cli {
    /// JSON configuration file; flags override individual fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Price a forward (--T) or a swap (--t1/--t2); prints JSON.
    Price,
    /// Emit a premium-curve CSV plus a sidecar diagnostics JSON.
    PremiumCurve,
    /// Print the admissibility report (D_L, D_b, beta_m, u_zero, assumption check).
    Admissibility,
    /// Dump the Riccati solution CSV (and optionally the vector field grid).
    Riccati {
        /// Also emit the (Lambda1, Lambda2) vector field on a (u1, u2) grid.
        #[arg(long)]
        field_grid: bool,
    },
    /// Monte Carlo validation runs; prints estimate JSON.
    Simulate {
        /// What to estimate: forward or premium.
        #[arg(long, default_value = "forward")]
        target: String,
        /// Simulate under P instead of the configured measure.
        #[arg(long)]
        under_p: bool,
    },
    /// Reproduce the data behind every preset panel into output_dir/figures.
    Figures,
}

/// Entry point used by the binary; returns the process exit code.
pub fn run() -> u8 {
    let cli = Cli::parse();
    configure_threads();
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn configure_threads() {
    if let Ok(s) = std::env::var("AFFINE_PREMIA_THREADS") {
        if let Ok(n) = s.trim().parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    cli.overrides.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Price => {
            let cfg = load_config(cli)?;
            let report = cmd_price(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&report).unwrap());
            Ok(())
        }
        Command::PremiumCurve => {
            let cfg = load_config(cli)?;
            let (csv_path, sidecar) = cmd_premium_curve(&cfg)?;
            eprintln!("wrote {} and {}", csv_path.display(), sidecar.display());
            Ok(())
        }
        Command::Admissibility => {
            let cfg = load_config(cli)?;
            let report = cmd_admissibility(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&report).unwrap());
            Ok(())
        }
        Command::Riccati { field_grid } => {
            let mut cfg = load_config(cli)?;
            if *field_grid && cfg.field_grid.is_none() {
                cfg.field_grid = Some(FieldGrid::default());
            }
            let paths = cmd_riccati(&cfg)?;
            for p in paths {
                eprintln!("wrote {}", p.display());
            }
            Ok(())
        }
        Command::Simulate { target, under_p } => {
            let cfg = load_config(cli)?;
            let report = cmd_simulate(&cfg, target, *under_p)?;
            println!("{}", serde_json::to_string_pretty(&report).unwrap());
            Ok(())
        }
        Command::Figures => {
            let cfg = load_config(cli)?;
            let written = cmd_figures(&cfg)?;
            for p in written {
                eprintln!("wrote {}", p.display());
            }
            Ok(())
        }
    }
}

// ---------------------------------------------------------------------------
// Atomic file output with a round-trip parse check.

fn write_atomic(path: &Path, content: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)
            .map_err(|e| Error::InvalidInput(format!("cannot create {}: {e}", dir.display())))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, content)
        .map_err(|e| Error::InvalidInput(format!("cannot write {}: {e}", tmp.display())))?;
    fs::rename(&tmp, path)
        .map_err(|e| Error::InvalidInput(format!("cannot rename into {}: {e}", path.display())))?;
    Ok(())
}

/// Serialise rows as CSV with 17 significant digits, write atomically and
/// re-parse the emitted bytes as a schema check.
fn write_csv(path: &Path, header: &str, rows: &[Vec<f64>]) -> Result<()> {
    let mut out = String::with_capacity(rows.len() * 80 + header.len() + 1);
    out.push_str(header);
    out.push('\n');
    for row in rows {
        let mut first = true;
        for v in row {
            if !first {
                out.push(',');
            }
            out.push_str(&format!("{v:.16e}"));
            first = false;
        }
        out.push('\n');
    }
    write_atomic(path, &out)?;
    reparse_csv(path, header.split(',').count(), rows.len())
}

fn reparse_csv(path: &Path, n_cols: usize, n_rows: usize) -> Result<()> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::Convergence(format!("csv round-trip open failed: {e}")))?;
    let mut count = 0usize;
    for record in reader.records() {
        let record =
            record.map_err(|e| Error::Convergence(format!("csv round-trip parse: {e}")))?;
        if record.len() != n_cols {
            return Err(Error::Convergence(format!(
                "csv round-trip: row has {} fields, expected {n_cols}",
                record.len()
            )));
        }
        for field in record.iter() {
            field
                .parse::<f64>()
                .map_err(|e| Error::Convergence(format!("csv round-trip float: {e}")))?;
        }
        count += 1;
    }
    if count != n_rows {
        return Err(Error::Convergence(format!(
            "csv round-trip: {count} rows re-read, expected {n_rows}"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// price

#[derive(Debug, Serialize)]
pub struct PriceReport {
    pub spot_model: SpotModel,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub maturity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delivery: Option<(f64, f64)>,
    pub forward_q: f64,
    pub forward_p: f64,
    pub premium: f64,
}

/// Forward or swap prices under Q and P for the configured instrument.
pub fn cmd_price(cfg: &RunConfig) -> Result<PriceReport> {
    cfg.validate()?;
    let params = &cfg.model;
    let state = &cfg.state;
    let mc = &cfg.measure;
    if let Some((t1, t2)) = cfg.delivery {
        let fq = pricing::swap_price(params, mc, state, t1, t2, cfg.spot_model, None)?;
        let fp =
            pricing::swap_price(params, &MeasureChange::p(), state, t1, t2, cfg.spot_model, None)?;
        return Ok(PriceReport {
            spot_model: cfg.spot_model,
            maturity: None,
            delivery: Some((t1, t2)),
            forward_q: fq,
            forward_p: fp,
            premium: fq - fp,
        });
    }
    let maturity = cfg.maturity.ok_or_else(|| {
        Error::InvalidInput("price requires either maturity (--T) or delivery (--t1/--t2)".into())
    })?;
    let (fq, fp) = match cfg.spot_model {
        SpotModel::Arithmetic => (
            pricing::forward_arithmetic(params, mc, state, maturity),
            pricing::forward_arithmetic(params, &MeasureChange::p(), state, maturity),
        ),
        SpotModel::Geometric => {
            let ric = RiccatiSolution::solve(params, mc, maturity - state.t + 1.0, cfg.tol)?;
            (
                pricing::forward_geometric(params, mc, state, maturity, &ric)?,
                pricing::forward_geometric_p(params, state, maturity)?,
            )
        }
    };
    Ok(PriceReport {
        spot_model: cfg.spot_model,
        maturity: Some(maturity),
        delivery: None,
        forward_q: fq,
        forward_p: fp,
        premium: fq - fp,
    })
}

// ---------------------------------------------------------------------------
// premium-curve

#[derive(Debug, Serialize)]
pub struct CurveSidecar {
    pub spot_model: SpotModel,
    pub slope_zero: f64,
    pub limit_infinity: f64,
    pub admissible: Option<bool>,
    pub warnings: Vec<String>,
}

/// Premium curve CSV (`tau_days,forward_q,forward_p,premium,sigma`) plus a
/// sidecar JSON with the sign diagnostics.
pub fn cmd_premium_curve(cfg: &RunConfig) -> Result<(PathBuf, PathBuf)> {
    cfg.validate()?;
    let taus = cfg.tau_grid.values();
    let curve =
        pricing::premium_curve(&cfg.model, &cfg.measure, &cfg.state, &taus, cfg.spot_model)?;
    let mut warnings = Vec::new();
    let admissible = match cfg.spot_model {
        SpotModel::Geometric => {
            if cfg.measure.beta2 < 1.0 {
                let m =
                    in_db(&cfg.model.sub, cfg.measure.theta2, cfg.measure.beta2, 0.5, cfg.model.rho)?;
                if !m.member {
                    warnings.push(format!(
                        "(theta2, beta2) outside D_b(1/2): min Lambda = {:.6e}; curve computed anyway",
                        m.lambda_min
                    ));
                }
                Some(m.member)
            } else {
                warnings.push("beta2 = 1 is outside the admissibility analysis".to_string());
                Some(false)
            }
        }
        SpotModel::Arithmetic => None,
    };
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let rows: Vec<Vec<f64>> = (0..curve.taus.len())
        .map(|i| {
            vec![
                curve.taus[i],
                curve.forward_q[i],
                curve.forward_p[i],
                curve.premium[i],
                curve.sigma[i],
            ]
        })
        .collect();
    let csv_path = cfg.output_dir.join("premium_curve.csv");
    write_csv(&csv_path, "tau_days,forward_q,forward_p,premium,sigma", &rows)?;
    let sidecar = CurveSidecar {
        spot_model: cfg.spot_model,
        slope_zero: curve.sign_limits.0,
        limit_infinity: curve.sign_limits.1,
        admissible,
        warnings,
    };
    let sidecar_path = cfg.output_dir.join("premium_curve.json");
    write_atomic(&sidecar_path, &serde_json::to_string_pretty(&sidecar).unwrap())?;
    Ok((csv_path, sidecar_path))
}

// ---------------------------------------------------------------------------
// admissibility

#[derive(Debug, Serialize)]
pub struct AdmissibilityReport {
    pub theta2: f64,
    pub theta2_in_d_l: bool,
    pub d_l_sup: f64,
    pub beta2: f64,
    pub in_db_half: Option<crate::admissibility::DbMembership>,
    pub beta_m: Option<f64>,
    pub no_admissible_beta: bool,
    pub u_min: Option<f64>,
    pub u_zero_half: Option<f64>,
    pub assumption_p: crate::admissibility::AssumptionP,
}

/// Admissibility diagnostics for the configured `(theta2, beta2)` at
/// `a = 1/2` (the geometric-pricing case).
pub fn cmd_admissibility(cfg: &RunConfig) -> Result<AdmissibilityReport> {
    cfg.validate()?;
    let sub = &cfg.model.sub;
    let rho = cfg.model.rho;
    let theta2 = cfg.measure.theta2;
    let beta2 = cfg.measure.beta2;
    let membership = if beta2 < 1.0 { Some(in_db(sub, theta2, beta2, 0.5, rho)?) } else { None };
    let bm = beta_max(sub, theta2, 0.5, rho)?;
    let u_m = if (0.0..1.0).contains(&beta2) && beta2 > 0.0 {
        Some(u_min(sub, theta2, beta2)?)
    } else {
        None
    };
    let u0 = match membership {
        Some(m) if m.member => Some(u_zero(sub, theta2, beta2, 0.5, rho)?),
        _ => None,
    };
    Ok(AdmissibilityReport {
        theta2,
        theta2_in_d_l: sub.theta_in_d_l(theta2),
        d_l_sup: sub.d_l_sup(),
        beta2,
        in_db_half: membership,
        beta_m: bm.value(),
        no_admissible_beta: matches!(bm, BetaMax::NoAdmissibleBeta),
        u_min: u_m,
        u_zero_half: u0,
        assumption_p: check_assumption_p(&cfg.model),
    })
}

// ---------------------------------------------------------------------------
// riccati

#[derive(Debug, Serialize)]
pub struct RiccatiSidecar {
    pub admissible: bool,
    pub blow_up: Option<f64>,
    pub horizon: f64,
    pub psi0_infinity: Option<f64>,
    pub decay_rate_fit: Option<f64>,
    pub decay_candidates: [f64; 2],
}

/// Solve and dump the Riccati triple as `t,psi0,psi1,psi2`; blow-up is
/// reported in the sidecar, not as a failure (truncated data stays useful).
pub fn cmd_riccati(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let params = &cfg.model;
    let mc = &cfg.measure;
    let ric = RiccatiSolution::solve(params, mc, cfg.horizon, cfg.tol)?;
    let mut written = Vec::new();

    let rows: Vec<Vec<f64>> = (0..ric.grid.len())
        .map(|i| vec![ric.grid[i], ric.psi0[i], ric.psi1[i], ric.psi2[i]])
        .collect();
    let csv_path = cfg.output_dir.join("riccati.csv");
    write_csv(&csv_path, "t,psi0,psi1,psi2", &rows)?;
    written.push(csv_path);

    let long = if ric.blow_up.is_none() {
        riccati::long_run(params, mc, cfg.tol).ok()
    } else {
        None
    };
    let sidecar = RiccatiSidecar {
        admissible: ric.admissible,
        blow_up: ric.blow_up,
        horizon: ric.horizon(),
        psi0_infinity: long.as_ref().map(|l| l.psi0_infinity),
        decay_rate_fit: long.as_ref().map(|l| l.decay_rate_fit),
        decay_candidates: [
            -params.alpha * (1.0 - mc.beta1),
            -params.rho * (1.0 - mc.beta2),
        ],
    };
    let sidecar_path = cfg.output_dir.join("riccati.json");
    write_atomic(&sidecar_path, &serde_json::to_string_pretty(&sidecar).unwrap())?;
    written.push(sidecar_path);

    if let Some(grid) = cfg.field_grid {
        let field_path = cfg.output_dir.join("riccati_field.csv");
        let rows = field_rows(params, mc, &grid)?;
        write_csv(&field_path, "u1,u2,lambda1,lambda2", &rows)?;
        written.push(field_path);
    }
    Ok(written)
}

/// The autonomous vector field `(Lambda1, Lambda2)` of the reduced system:
/// `Lambda1(u1, u2) = Lambda(u1)` with offset `a = u2^2 / 2`, and
/// `Lambda2(u1, u2) = -alpha (1 - beta1) u2`.
pub fn field_rows(
    params: &ModelParams,
    mc: &MeasureChange,
    grid: &FieldGrid,
) -> Result<Vec<Vec<f64>>> {
    let n = grid.points.max(2);
    let u1_cap = (params.sub.theta_max() - mc.theta2 - 1e-6).min(grid.u1_max);
    let mut rows = Vec::with_capacity(n * n);
    for i in 0..n {
        let u1 = u1_cap * i as f64 / (n - 1) as f64;
        for j in 0..n {
            let u2 = grid.u2_max * j as f64 / (n - 1) as f64;
            let l1 = lambda_fn(
                &params.sub,
                mc.theta2,
                mc.beta2.min(1.0 - 1e-12),
                0.5 * u2 * u2,
                params.rho,
                u1,
            )?;
            let l2 = -params.alpha * (1.0 - mc.beta1) * u2;
            rows.push(vec![u1, u2, l1, l2]);
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Debug, Serialize)]
pub struct SimulateReport {
    pub target: String,
    pub measure: String,
    pub spot_model: SpotModel,
    pub maturity: f64,
    pub estimate: mc::SimEstimate,
    /// Matching analytic value when one is available.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analytic: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abs_diff_over_se: Option<f64>,
}

/// Monte Carlo validation run for the configured forward or premium.
pub fn cmd_simulate(cfg: &RunConfig, target: &str, under_p: bool) -> Result<SimulateReport> {
    cfg.validate()?;
    let params = &cfg.model;
    let state = &cfg.state;
    let maturity = cfg.maturity.unwrap_or(state.t + 30.0);
    let tau = maturity - state.t;
    let mut path_cfg = PathConfig::new(cfg.mc.n_paths, cfg.mc.seed, tau);
    path_cfg.ts_epsilon = cfg.mc.ts_epsilon;

    let report = match target {
        "forward" => {
            let measure =
                if under_p { Measure::P } else { Measure::Q(cfg.measure) };
            let est = mc::estimate_forward(params, &measure, state, maturity, cfg.spot_model, &path_cfg)?;
            let analytic = match (cfg.spot_model, under_p) {
                (SpotModel::Arithmetic, true) => {
                    Some(pricing::forward_arithmetic(params, &MeasureChange::p(), state, maturity))
                }
                (SpotModel::Arithmetic, false) => {
                    Some(pricing::forward_arithmetic(params, &cfg.measure, state, maturity))
                }
                (SpotModel::Geometric, true) => {
                    pricing::forward_geometric_p(params, state, maturity).ok()
                }
                (SpotModel::Geometric, false) => {
                    RiccatiSolution::solve(params, &cfg.measure, tau + 1.0, cfg.tol)
                        .and_then(|r| pricing::forward_geometric(params, &cfg.measure, state, maturity, &r))
                        .ok()
                }
            };
            build_sim_report("forward", under_p, cfg, maturity, est, analytic)
        }
        "premium" => {
            let est = mc::estimate_premium(params, &cfg.measure, state, tau, cfg.spot_model, &path_cfg)?;
            let analytic = match cfg.spot_model {
                SpotModel::Arithmetic => {
                    Some(pricing::premium_arithmetic(params, &cfg.measure, state, tau).value)
                }
                SpotModel::Geometric => RiccatiSolution::solve(params, &cfg.measure, tau + 1.0, cfg.tol)
                    .and_then(|r| pricing::premium_geometric(params, &cfg.measure, state, tau, &r))
                    .ok(),
            };
            build_sim_report("premium", false, cfg, maturity, est, analytic)
        }
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown simulate target '{other}' (forward|premium)"
            )))
        }
    };

    if let Some(n_dump) = cfg.mc.dump_paths {
        let mut dump_cfg = path_cfg.clone();
        dump_cfg.obs_grid = (0..=20).map(|k| tau * k as f64 / 20.0).collect();
        let measure = if under_p { Measure::P } else { Measure::Q(cfg.measure) };
        let samples = mc::dump_paths(params, &measure, state, &dump_cfg, n_dump)?;
        let rows: Vec<Vec<f64>> = samples
            .iter()
            .map(|s| vec![s.path_id as f64, s.t, s.x, s.sigma2])
            .collect();
        write_csv(&cfg.output_dir.join("paths.csv"), "path_id,t,x,sigma2", &rows)?;
    }
    Ok(report)
}

fn build_sim_report(
    target: &str,
    under_p: bool,
    cfg: &RunConfig,
    maturity: f64,
    est: mc::SimEstimate,
    analytic: Option<f64>,
) -> SimulateReport {
    let abs_diff_over_se = analytic.map(|a| {
        if est.std_error > 0.0 {
            (est.mean - a).abs() / est.std_error
        } else {
            0.0
        }
    });
    SimulateReport {
        target: target.to_string(),
        measure: if under_p { "P".to_string() } else { "Q".to_string() },
        spot_model: cfg.spot_model,
        maturity,
        estimate: est,
        analytic,
        abs_diff_over_se,
    }
}

// ---------------------------------------------------------------------------
// figures

/// What a preset reproduces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PresetKind {
    ArithmeticPremium,
    GeometricPremium,
    /// Riccati trajectory plus vector-field grid for the worked examples.
    RiccatiExample,
}

/// A captioned parameter set.
#[derive(Debug, Clone)]
pub struct FigurePreset {
    pub name: &'static str,
    pub kind: PresetKind,
    pub measure: MeasureChange,
    /// Subordinator override (the one-jump example switches families).
    pub sub: Option<SubordinatorSpec>,
}

/// The twelve captioned panels: four arithmetic premium profiles, six
/// geometric premium profiles, and the two worked Riccati examples.
pub fn figure_presets() -> Vec<FigurePreset> {
    let m = |t1, t2, b1, b2| MeasureChange::new(t1, t2, b1, b2);
    vec![
        FigurePreset { name: "arith_esscher_pos", kind: PresetKind::ArithmeticPremium, measure: m(0.3, 0.0, 0.0, 0.0), sub: None },
        FigurePreset { name: "arith_esscher_neg", kind: PresetKind::ArithmeticPremium, measure: m(-0.3, 0.0, 0.0, 0.0), sub: None },
        FigurePreset { name: "arith_speed_only", kind: PresetKind::ArithmeticPremium, measure: m(0.0, 0.0, 0.9, 0.0), sub: None },
        FigurePreset { name: "arith_level_speed", kind: PresetKind::ArithmeticPremium, measure: m(-0.04, 0.0, 0.9, 0.0), sub: None },
        FigurePreset { name: "geom_esscher_pos", kind: PresetKind::GeometricPremium, measure: m(0.024, -50.0, 0.0, 0.0), sub: None },
        FigurePreset { name: "geom_esscher_neg", kind: PresetKind::GeometricPremium, measure: m(-2.0, -50.0, 0.0, 0.0), sub: None },
        FigurePreset { name: "geom_speed_a", kind: PresetKind::GeometricPremium, measure: m(0.0, 0.0, 0.18, 0.2), sub: None },
        FigurePreset { name: "geom_speed_b", kind: PresetKind::GeometricPremium, measure: m(0.0, 0.0, 0.75, 0.0), sub: None },
        FigurePreset { name: "geom_level_speed_a", kind: PresetKind::GeometricPremium, measure: m(0.001, -50.0, 0.0, 0.9), sub: None },
        FigurePreset { name: "geom_level_speed_b", kind: PresetKind::GeometricPremium, measure: m(-0.1, -50.0, 0.8, 0.8), sub: None },
        FigurePreset {
            name: "riccati_one_jump",
            kind: PresetKind::RiccatiExample,
            measure: m(0.0, 0.0, 0.3, 0.3),
            sub: Some(SubordinatorSpec::Dirac { a: 1.0 }),
        },
        FigurePreset {
            name: "riccati_exp_jumps",
            kind: PresetKind::RiccatiExample,
            measure: m(0.0, -5.0, 0.45, 0.45),
            sub: None,
        },
    ]
}

/// Emit one CSV per preset panel into `output_dir/figures`. Admissibility
/// findings are reported as warnings; the batch never aborts on them.
pub fn cmd_figures(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let dir = cfg.output_dir.join("figures");
    let mut written = Vec::new();
    for preset in figure_presets() {
        let mut model = cfg.model.clone();
        if let Some(sub) = preset.sub {
            model.sub = sub;
        }
        let mut sub_cfg = cfg.clone();
        sub_cfg.model = model;
        sub_cfg.measure = preset.measure;
        sub_cfg.output_dir = dir.clone();
        match emit_preset(&sub_cfg, &preset, &dir) {
            Ok(mut paths) => written.append(&mut paths),
            Err(e) => eprintln!("warning: preset {}: {e}", preset.name),
        }
    }
    Ok(written)
}

fn emit_preset(cfg: &RunConfig, preset: &FigurePreset, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    match preset.kind {
        PresetKind::ArithmeticPremium | PresetKind::GeometricPremium => {
            let model_kind = if preset.kind == PresetKind::ArithmeticPremium {
                SpotModel::Arithmetic
            } else {
                SpotModel::Geometric
            };
            if model_kind == SpotModel::Geometric && cfg.measure.beta2 < 1.0 {
                let m = in_db(&cfg.model.sub, cfg.measure.theta2, cfg.measure.beta2, 0.5, cfg.model.rho)?;
                if !m.member {
                    eprintln!(
                        "warning: preset {}: (theta2, beta2) outside D_b(1/2) (min Lambda = {:.4e}); attempting anyway",
                        preset.name, m.lambda_min
                    );
                }
            }
            let taus = cfg.tau_grid.values();
            let curve = pricing::premium_curve(&cfg.model, &cfg.measure, &cfg.state, &taus, model_kind)?;
            let rows: Vec<Vec<f64>> = (0..curve.taus.len())
                .map(|i| {
                    vec![
                        curve.taus[i],
                        curve.forward_q[i],
                        curve.forward_p[i],
                        curve.premium[i],
                        curve.sigma[i],
                    ]
                })
                .collect();
            let path = dir.join(format!("{}.csv", preset.name));
            write_csv(&path, "tau_days,forward_q,forward_p,premium,sigma", &rows)?;
            written.push(path);
        }
        PresetKind::RiccatiExample => {
            let ric = RiccatiSolution::solve(&cfg.model, &cfg.measure, 60.0, cfg.tol)?;
            let rows: Vec<Vec<f64>> = (0..ric.grid.len())
                .map(|i| vec![ric.grid[i], ric.psi0[i], ric.psi1[i], ric.psi2[i]])
                .collect();
            let path = dir.join(format!("{}.csv", preset.name));
            write_csv(&path, "t,psi0,psi1,psi2", &rows)?;
            written.push(path);
            let grid = cfg.field_grid.unwrap_or_default();
            let field = field_rows(&cfg.model, &cfg.measure, &grid)?;
            let field_path = dir.join(format!("{}_field.csv", preset.name));
            write_csv(&field_path, "u1,u2,lambda1,lambda2", &field)?;
            written.push(field_path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_paper_base() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.model.alpha, 0.127);
        assert_eq!(cfg.model.rho, 1.11);
        assert_eq!(cfg.model.sub, SubordinatorSpec::CpExp { c: 0.4, lambda: 2.0 });
        assert_eq!(cfg.state.x, 2.5);
        assert_eq!(cfg.state.sigma2, 0.0625);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn tau_grid_default_is_daily_year() {
        let g = TauGrid::default().values();
        assert_eq!(g.len(), 361);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[360], 360.0);
        assert_eq!(g[1], 1.0);
    }

    #[test]
    fn validation_rejects_boundary_tilt() {
        let mut cfg = RunConfig::default();
        cfg.measure.theta2 = 1.0; // Theta_L / 2 for lambda = 2
        let err = cfg.validate().unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("D_L"), "message: {err}");
    }

    #[test]
    fn preset_list_has_twelve_panels() {
        let presets = figure_presets();
        assert_eq!(presets.len(), 12);
        let names: Vec<_> = presets.iter().map(|p| p.name).collect();
        assert!(names.contains(&"arith_level_speed"));
        assert!(names.contains(&"geom_level_speed_a"));
        assert!(names.contains(&"riccati_one_jump"));
    }

    #[test]
    fn field_grid_is_zero_at_origin() {
        let cfg = RunConfig::default();
        let rows = field_rows(&cfg.model, &cfg.measure, &FieldGrid::default()).unwrap();
        let origin = rows.iter().find(|r| r[0] == 0.0 && r[1] == 0.0).unwrap();
        assert_eq!(origin[2], 0.0);
        assert_eq!(origin[3], 0.0);
    }
}
