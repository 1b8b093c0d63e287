use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("search space of {size} expressions exceeds the limit of {limit}")]
    SearchSpaceTooLarge { size: u128, limit: u128 },

    #[error("no solvable instance found after {attempts} draws")]
    InfeasibleParameters { attempts: usize },

    #[error("unknown hidden rule `{0}`")]
    UnknownRule(String),

    #[error("unknown token `{0}`")]
    UnknownToken(String),

    #[error("token id {id} is outside a vocabulary of size {size}")]
    TokenOutOfRange { id: u16, size: usize },

    #[error("group `{0}` has no masked-in members")]
    EmptyGroup(String),

    #[error("RLVR is unavailable: task `{0}` has no trainer-visible verifier")]
    RlvrUnavailable(String),

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("dataset is empty")]
    DatasetEmpty,

    #[error("evaluation split is empty")]
    EmptySplit,

    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),

    #[error("malformed record at {path}:{line}: {message}")]
    Record {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
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
