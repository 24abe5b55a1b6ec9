use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("kernel matrix is not positive definite (last jitter tried: {jitter:e})")]
    Factorization { jitter: f64 },

    #[error("hyperparameter fit failed after {restarts} restarts: {diagnostics}")]
    Fitting { restarts: usize, diagnostics: String },

    #[error("indicator undefined: zero variance exactly at the threshold")]
    DegeneratePoint,

    #[error("hypothetical location already resolved (variance {variance:e} <= guard {guard:e})")]
    ResolvedLocation { variance: f64, guard: f64 },

    #[error("model evaluation failed at {x:?}: {reason}")]
    Evaluation { x: Vec<f64>, reason: String },

    #[error("ingestion error at row {row}: {reason}")]
    Ingestion { row: usize, reason: String },

    #[error("resolution guard: {requested} evaluations exceeds limit {limit}")]
    ResolutionGuard { requested: u64, limit: u64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}
