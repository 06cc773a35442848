use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("empty ball: {0}")]
    EmptyBall(String),
    #[error("operator `{op}` acts on mean-zero inputs only; zero mode is {mean:e} (relative {relative:e})")]
    ZeroMode {
        op: String,
        mean: f64,
        relative: f64,
    },
    #[error("size budget exceeded: {0}")]
    Budget(String),
    #[error("no valid samples: {0}")]
    NoValidSamples(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("zero denominator: {0}")]
    ZeroDenominator(String),
    #[error("linear algebra failure: {0}")]
    Linalg(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn invalid(msg: impl Into<String>) -> LabError {
    LabError::InvalidArgument(msg.into())
}
