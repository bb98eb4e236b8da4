use std::path::PathBuf;

use thiserror::Error;

use crate::factorization::Checkpoint;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("duplicate rating for user {user:?}, item {item:?} (line {line})")]
    DuplicateRating { user: String, item: String, line: u64 },

    #[error("rating {value} outside scale [{min}, {max}] (line {line})")]
    RatingOutOfScale {
        value: f64,
        min: f64,
        max: f64,
        line: u64,
    },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("missing image for item {0:?}")]
    MissingImage(String),

    #[error("cannot decode image {path}: {message}")]
    ImageDecode { path: PathBuf, message: String },

    #[error("user {0:?} has no imaged training items")]
    MissingBundle(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("cold {0} without side information")]
    ColdWithoutImage(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("training diverged at outer iteration {iteration}: {message}")]
    Diverged {
        iteration: usize,
        message: String,
        last_good: Box<Checkpoint>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_) | Error::Factorization(_) | Error::Diverged { .. }
        )
    }
}
