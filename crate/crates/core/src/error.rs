use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid compressor: {0}")]
    InvalidCompressor(String),

    #[error("empirical delta is undefined for the zero vector")]
    UndefinedDelta,

    #[error("expected {expected} worker messages, got {got}")]
    WorkerCount { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("stepsize precondition violated at t={t}: eta={eta} >= 3/(2L)={limit}")]
    StepsizeTooLarge { t: usize, eta: f64, limit: f64 },

    #[error("diverged at iteration {t} (loss={loss}, |x|={x_norm})")]
    Divergence { t: usize, loss: f64, x_norm: f64 },

    #[error("malformed message: {0}")]
    MalformedMessage(String),

    #[error("invalid message: {0}")]
    InvalidMessage(String),

    #[error("dataset format: {0}")]
    Dataset(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
