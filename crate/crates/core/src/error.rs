use thiserror::Error;

/// Errors produced by the `ostbc_core` routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("tolerance must be positive, got {0}")]
    NonPositiveTolerance(f64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unknown code `{0}`")]
    UnknownCode(String),

    #[error("code `{name}` violates orthogonality: norm deviation {norm_dev:.3e}, cross deviation {cross_dev:.3e}")]
    InvalidCode {
        name: String,
        norm_dev: f64,
        cross_dev: f64,
    },

    #[error("failed to parse code definition: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("index {index} out of range (0..{len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("zero {0} rejected")]
    ZeroInput(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerically corrupted subspace: {0}")]
    CorruptedSubspace(String),

    #[error("census check failed: {0}")]
    Census(String),
}

pub type Result<T> = std::result::Result<T, Error>;
