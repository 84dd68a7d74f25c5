use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the workbench.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("utterance {utt_id} is too short: {samples} samples < one window of {window} samples")]
    UtteranceTooShort {
        utt_id: String,
        samples: usize,
        window: usize,
    },

    #[error("missing CMVN statistics for speaker {0}")]
    MissingSpeakerStats(String),

    #[error("feature dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid token id {id} (vocabulary size {vocab_size})")]
    InvalidToken { id: usize, vocab_size: usize },

    #[error("encoder transfer rejected: {}", .0.join("; "))]
    TransferMismatch(Vec<String>),

    #[error("corrupt parameter file for {name}: {reason}")]
    CorruptParameter { name: String, reason: String },

    #[error("checkpoint does not match configuration: {0}")]
    ConfigMismatch(String),

    #[error("non-finite loss {loss} in batch {batch}")]
    NonFiniteLoss { batch: usize, loss: f64 },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("label/frame length mismatch for {utt_id}: {labels} labels vs {frames} frames")]
    LabelMismatch {
        utt_id: String,
        labels: usize,
        frames: usize,
    },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Wav(#[from] hound::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
