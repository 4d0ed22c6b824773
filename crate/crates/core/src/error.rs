use thiserror::Error;

/// Library-wide error type.
///
/// Validation failures (`InvalidInput`, `Domain`, `NotInDb`,
/// `UnsupportedModel`) map to CLI exit code 2; numerical failures map to 3.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("convergence failure: {0}")]
    Convergence(String),
    #[error("(theta={theta}, beta={beta}) is not in D_b({a}): min Lambda = {lambda_min:.6e}")]
    NotInDb {
        theta: f64,
        beta: f64,
        a: f64,
        lambda_min: f64,
    },
    #[error("expectation is infinite: {0}")]
    NotFinite(String),
    #[error("not converged: {0}")]
    NotConverged(String),
    #[error("time {requested} exceeds solved horizon {horizon}")]
    HorizonExceeded { requested: f64, horizon: f64 },
    #[error("upstream Riccati solution blew up at t = {0}")]
    BlowUpUpstream(f64),
    #[error("unsupported model: {0}")]
    UnsupportedModel(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the CLI: 2 validation, 3 numerical.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::InvalidInput(_)
            | Error::Domain(_)
            | Error::NotInDb { .. }
            | Error::UnsupportedModel(_) => 2,
            _ => 3,
        }
    }
}
