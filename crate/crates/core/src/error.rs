use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("game does not support single-agent reduction: {0}")]
    UnsupportedReduction(String),

    #[error("stage mismatch: {0}")]
    StageMismatch(String),

    #[error("invalid augmentation layer {index}: network has {hidden} hidden layers")]
    InvalidAugmentLayer { index: usize, hidden: usize },

    #[error("network is already augmented")]
    AlreadyAugmented,

    #[error("transition rows are not stochastic: {0}")]
    NonStochastic(String),

    #[error("enumeration bound exceeded: more than {0} joint trajectories")]
    BoundExceeded(u64),

    #[error("empty minibatch")]
    EmptyMinibatch,

    #[error("zero samples requested")]
    ZeroSamples,

    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown {kind} '{name}'")]
    Unknown { kind: &'static str, name: String },

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
