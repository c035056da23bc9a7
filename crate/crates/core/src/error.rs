use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AtlasError {
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("unknown sampler `{0}`")]
    UnknownSampler(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("initial point has non-finite log density or gradient")]
    NonFiniteInitialPoint,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("reference standard deviation is zero in dimension {0}")]
    ZeroReferenceSd(usize),
    #[error("model `{0}` has no reference moments")]
    NoReferenceMoments(String),
    #[error("corrupt run directory {path}: {reason}")]
    CorruptRun { path: PathBuf, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, AtlasError>;
