use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("vector length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid topic prior: {0}")]
    InvalidPrior(String),

    #[error("rank {rank} outside 1..={slate_size}")]
    RankOutOfRange { rank: usize, slate_size: usize },

    #[error("malformed slate: {0}")]
    MalformedSlate(String),

    #[error("session already terminated; call reset first")]
    SessionTerminated,

    #[error("unknown environment `{0}`")]
    UnknownEnv(String),

    #[error("unknown policy `{0}`")]
    UnknownPolicy(String),

    #[error("malformed catalog: {0}")]
    MalformedCatalog(String),

    #[error("empty interaction log")]
    EmptyLog,

    #[error("click model not identifiable: {0}")]
    NonIdentifiable(String),

    #[error("zero examination probability at rank 1")]
    ZeroLeadingExamination,

    #[error("{0}")]
    InvalidArgument(String),

    #[error("malformed record at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
