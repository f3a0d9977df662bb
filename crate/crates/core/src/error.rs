use thiserror::Error;

/// Errors raised across the commitment engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate cost fit: need at least 3 distinct MW points, got {0}")]
    DegenerateFit(usize),

    #[error("period index {index} out of range for trace of {len} periods")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid generator {id}: {reason}")]
    InvalidGenerator { id: String, reason: String },

    #[error("enumeration refused: {0} discretionary units exceeds the cap of {1}")]
    CapExceeded(usize, usize),

    #[error("gap undefined for non-positive reference objective {0}")]
    UndefinedGap(f64),

    #[error("contract violation at period {period}: {message}")]
    ContractViolation { period: usize, message: String },

    #[error("simulation of {n} generators failed: {source}")]
    StudyRun {
        n: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
