use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed row: {reason}")]
    MalformedRow {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("unknown dataset format `{0}` (expected `movielens-tab` or `csv-generic`)")]
    UnknownFormat(String),

    #[error("no users left after filtering")]
    EmptyDataset,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("vector length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("unknown {kind} strategy `{id}`")]
    UnknownStrategy { kind: &'static str, id: String },

    #[error("client update references unknown user {0}")]
    UnknownUser(usize),

    #[error("client update references unknown item {0}")]
    UnknownItem(usize),

    #[error("confidence interval needs at least 2 users, got {0}")]
    TooFewUsers(usize),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("round {round}: {what} matrix has non-finite values")]
    NonFinite { round: usize, what: &'static str },

    #[error("serialization failed: {0}")]
    Serialize(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
