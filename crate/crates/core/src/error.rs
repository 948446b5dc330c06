use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("schema mismatch at `{field}`: {message}")]
    Schema { field: String, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("embedding blob {path}: expected {expected} bytes, found {found}")]
    SizeMismatch {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("degenerate path: {0}")]
    DegeneratePath(String),

    #[error("trajectory `{0}` has no kinematic magnitudes")]
    MissingKinematics(String),

    #[error("trajectory `{0}` has no embeddings")]
    MissingEmbeddings(String),

    #[error("incompatible embeddings: dim {left} vs dim {right}")]
    IncompatibleEmbeddings { left: usize, right: usize },

    #[error("cannot split {frames} frames into {parts} segments of at least {min_len} frames")]
    InfeasibleSplit {
        frames: usize,
        parts: usize,
        min_len: usize,
    },

    #[error("invalid cost {0}: costs must be finite and non-negative")]
    InvalidCost(f64),

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("unknown motif `{0}`")]
    UnknownMotif(String),

    #[error("match {traj_id}[{start}..{end}) has no label")]
    Unlabeled {
        traj_id: String,
        start: usize,
        end: usize,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input data rather than bad invocation.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::InvalidParams(_))
    }
}
