use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error("operation requires a hexagonal region")]
    NotHexagonal,

    #[error("path loss is singular at distance {0} (set r0 > 0)")]
    SingularPathLoss(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("covariance matrix is not Hermitian (max asymmetry {0:e})")]
    NotHermitian(f64),

    #[error("covariance matrix is not positive semidefinite (smallest eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("covariance block {port} has trace {trace} above its budget {budget}")]
    BudgetExceeded { port: usize, trace: f64, budget: f64 },

    #[error("brute-force covariance search supports N*L <= 4, got {0}")]
    OracleTooLarge(usize),

    #[error("target rate {target} not attainable in power bracket [{lo:e}, {hi:e}] (rate at upper end {rate_hi})")]
    BracketFailure { target: f64, lo: f64, hi: f64, rate_hi: f64 },

    #[error("rate is not monotone in power on the bracket (S={at:e})")]
    NonMonotone { at: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
