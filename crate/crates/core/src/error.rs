use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("rating {rating} is outside the scale 1..={scale}")]
    RatingOutOfScale { rating: i64, scale: u8 },

    #[error("duplicate rating for user {user}, item {item}")]
    DuplicateRating { user: usize, item: usize },

    #[error("{what}: expected length {expected}, got {actual}")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown user index {0}")]
    UnknownUser(usize),

    #[error("no prediction for test pair (user {user}, item {item})")]
    MissingPrediction { user: usize, item: usize },

    #[error("exact enumeration over {units} binary units exceeds the limit of {limit}")]
    EnumerationTooLarge { units: usize, limit: usize },

    #[error("training diverged at epoch {epoch}: non-finite parameter")]
    Divergence { epoch: usize },

    #[error("malformed {kind} file: {message}")]
    Format { kind: &'static str, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn format(kind: &'static str, message: impl Into<String>) -> Self {
        Error::Format {
            kind,
            message: message.into(),
        }
    }
}
