use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse error category, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Internal,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("malformed frame file {path}: {len} bytes is not a multiple of 16")]
    MalformedFrame { path: PathBuf, len: usize },

    #[error("empty sequence")]
    EmptySequence,

    #[error("{path}:{line}: {reason}")]
    MalformedLabel {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("frame exceeds N_total ({len} points > {n_total})")]
    FrameExceedsTotal { len: usize, n_total: usize },

    #[error("arity mismatch: expected {expected} points, found {found}")]
    ArityMismatch { expected: usize, found: usize },

    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("n_query = {n_query} exceeds sequence length {frames}")]
    QueryExceedsSequence { n_query: usize, frames: usize },

    #[error("empty cluster")]
    EmptyCluster,

    #[error("unmatched frame stems: {}", .0.join(", "))]
    UnmatchedFrames(Vec<String>),

    #[error("malformed background model: {0}")]
    MalformedModel(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Config,
            Error::Invariant(_) => ErrorKind::Internal,
            _ => ErrorKind::Data,
        }
    }
}
