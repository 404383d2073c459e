use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("infinite set: {0}")]
    InfiniteSet(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("unsupported instance: {0}")]
    Unsupported(String),

    #[error("enumeration budget exceeded: {0}")]
    Budget(String),

    #[error("degenerate scale M = {scale}: {reason}")]
    DegenerateScale { scale: f64, reason: String },

    #[error("search exhausted: {0}")]
    NotFound(String),

    #[error("oracle mismatch: {0}")]
    OracleMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
