use thiserror::Error;

#[derive(Debug, Error)]
pub enum DmlError {
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "insufficient active triplets: accepted {accepted} of {requested} after {draws} draws \
         (acceptance rate {rate:.3e})"
    )]
    InsufficientTriplets {
        requested: usize,
        accepted: usize,
        draws: usize,
        rate: f64,
    },

    #[error("dual variable {index} = {value} lies outside [-1, 0]")]
    InfeasibleDual { index: usize, value: f64 },

    #[error("symmetric eigendecomposition did not converge")]
    EigenFailure,

    #[error("oracle solve did not converge: duality gap {gap:.3e} > {tol:.3e}")]
    OracleNotConverged { gap: f64, tol: f64 },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DmlError>;

pub(crate) fn invalid(msg: impl Into<String>) -> DmlError {
    DmlError::InvalidArgument(msg.into())
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(DmlError::DimensionMismatch { expected, got })
    }
}
