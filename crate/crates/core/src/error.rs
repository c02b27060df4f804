use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("index {index} out of range for {what} (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "infeasible intervention: target popular proportion {target} exceeds observed {observed}"
    )]
    InfeasibleProportion { target: f64, observed: f64 },

    #[error("graph node {0} is isolated (degree 0)")]
    IsolatedNode(usize),

    #[error("negative sampling for user {user} failed after {attempts} attempts")]
    NegativeSampling { user: usize, attempts: usize },

    #[error("non-finite gradient in table {table} row {row}")]
    NonFiniteGradient { table: &'static str, row: usize },

    #[error("density calibration failed: {0}")]
    Calibration(String),

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
