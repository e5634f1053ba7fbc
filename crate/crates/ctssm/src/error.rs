//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by model construction, likelihood evaluation and fitting.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an argument was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The discretisation grid captures too little probability mass for the
    /// process it is paired with.
    #[error("ill-conditioned grid: {0}")]
    IllConditionedGrid(String),

    /// An evaluation left the representable range (e.g. the log-mean of a
    /// count distribution overflowed).
    #[error("numeric domain error: {0}")]
    NumericDomain(String),

    /// A NaN or infinity appeared during a recursion; `step` is the
    /// observation index at which it was first detected.
    #[error("numeric failure at step {step}: {message}")]
    NumericFailure { step: usize, message: String },

    /// An argument lies outside the supported domain (e.g. an age outside
    /// the spline knot range).
    #[error("out of domain: {0}")]
    OutOfDomain(String),

    /// A brute-force evaluation was requested on an instance too large for
    /// exhaustive enumeration.
    #[error("instance too large: {0}")]
    TooLarge(String),

    /// The optimizer could not be started because the objective was not
    /// finite at the initial point.
    #[error("invalid start: {0}")]
    InvalidStart(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Dataset ingestion failure, locating the offending row and column.
    #[error("ingestion error at row {row}, column {column}: {message}")]
    Ingestion {
        row: usize,
        column: String,
        message: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
