//! Crate-wide error type for user-facing operations.
//!
//! Internal tensor shape violations panic with both shapes in the message
//! (they are programmer errors, like index-out-of-bounds in `ndarray`).
//! Everything a caller can trigger with bad inputs or a bad environment
//! surfaces as [`Error`].

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("class index {index} out of range [0, {count})")]
    ClassOutOfRange { index: usize, count: usize },

    #[error("split fractions {0:?} must be positive and sum to 1")]
    BadSplitFractions([f64; 3]),

    #[error("dataset too small: n = {n}, need at least {min}")]
    DatasetTooSmall { n: usize, min: usize },

    #[error("empty split: {0}")]
    EmptySplit(String),

    #[error("requested {requested} clusters but only {available} samples")]
    TooManyClusters { requested: usize, available: usize },

    #[error("need at least {min} samples, got {got}")]
    TooFewSamples { got: usize, min: usize },

    #[error("n_train = {requested} exceeds available training samples {available}")]
    NotEnoughLabeled { requested: usize, available: usize },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarBackward(Vec<usize>),

    #[error("batch size must be at least 2 for the contrastive loss, got {0}")]
    BatchTooSmall(usize),

    #[error("integration steps must be >= 1")]
    ZeroSteps,

    #[error("image shape {got:?} does not match expected {expected:?}")]
    ImageShape { got: Vec<usize>, expected: Vec<usize> },

    #[error("incompatible {what}: checkpoint has {checkpoint}, dataset has {dataset}")]
    Incompatible {
        what: String,
        checkpoint: String,
        dataset: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what} in {path}: {detail}")]
    Format {
        what: &'static str,
        path: PathBuf,
        detail: String,
    },

    #[error("{0}")]
    Other(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
