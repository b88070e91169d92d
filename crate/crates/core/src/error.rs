use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A Cholesky pivot was not strictly positive.
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("matrix is not Hermitian (relative asymmetry {0:e})")]
    NotHermitian(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("duplicate target range bin {0}")]
    DuplicateBin(usize),

    #[error("target range bin {bin} outside 1..={k}")]
    BinOutOfRange { bin: usize, k: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// No responsibility mass on the target class; the angle PMF is undefined.
    #[error("no target mass in responsibilities")]
    NoTargetMass,

    #[error("posterior of range bin {0} underflowed in every component")]
    DegeneratePosterior(usize),

    #[error("empty trial batch")]
    EmptyBatch,

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
