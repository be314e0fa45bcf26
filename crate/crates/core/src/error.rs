use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid modality code {0:?}: expected a one-hot vector")]
    InvalidCode(Vec<f32>),

    #[error("unknown modality {0:?} (expected one of t1, t1ce, t2, flair)")]
    UnknownModality(String),

    #[error("batch size {batch_size} is not divisible by the number of modalities {modalities}")]
    IndivisibleBatch { batch_size: usize, modalities: usize },

    #[error("subject {subject} is missing modality {modality}")]
    MissingModality { subject: String, modality: String },

    #[error("subject {0} not found in manifest")]
    MissingSubject(String),

    #[error("non-finite value in {what}")]
    NonFinite { what: String },

    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: u64, detail: String },

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("empty set: {0}")]
    EmptySet(String),

    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),

    #[error("image {height}x{width} is smaller than the {window}x{window} window")]
    ImageTooSmall { height: usize, width: usize, window: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }
}
