use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not positive definite (after {attempts} jitter retries)")]
    NotPositiveDefinite { attempts: u32 },

    #[error("singular matrix: {0}")]
    Singular(&'static str),

    #[error("symmetric eigendecomposition did not converge")]
    EigenNonConvergence,

    #[error("quadratic form is negative beyond roundoff: {0:e}")]
    NegativeNorm(f64),

    #[error("kernel specifications of the two expansions differ")]
    KernelMismatch,

    #[error("discretized Fredholm solve is inconsistent: residual {0:e}")]
    Discretization(f64),

    #[error("internal identity violated: {0}")]
    Inconsistent(String),

    #[error("unsupported design measure: {0}")]
    UnsupportedMeasure(String),

    #[error("all {0} replications failed")]
    AllReplicationsFailed(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
