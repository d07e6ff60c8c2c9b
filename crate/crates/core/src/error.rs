use thiserror::Error;

/// Errors raised by the decoding engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("epoch too short: {len} samples, filter warm-up needs more than {min}")]
    EpochTooShort { len: usize, min: usize },

    #[error("need at least {needed} trials per region, region {region} has {got}")]
    TooFewTrials {
        region: usize,
        got: usize,
        needed: usize,
    },

    #[error("regression matrix is rank deficient ({rank} of {cols}); region {region} is not identifiable")]
    SingularRegression {
        rank: usize,
        cols: usize,
        region: usize,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
