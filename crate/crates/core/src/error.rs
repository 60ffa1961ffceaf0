use thiserror::Error;

/// Errors raised by the loop-space toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("mode range error: {0}")]
    Range(String),

    #[error("aliasing: {samples} samples is below the floor {floor} for this window")]
    Aliasing { samples: usize, floor: usize },

    #[error("inadmissible lambda0: {0}")]
    Inadmissible(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate zero: {0}")]
    Degenerate(String),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("schema error: {0}")]
    Schema(String),
}

pub type Result<T> = std::result::Result<T, Error>;
