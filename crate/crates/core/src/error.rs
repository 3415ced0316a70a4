use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("no rule fired: {0}")]
    NoRuleFired(String),

    #[error("could not find {needed} distinct scenarios for split `{split}` after {attempts} attempts")]
    InsufficientScenarios {
        split: String,
        needed: usize,
        attempts: usize,
    },

    #[error("non-finite loss {loss} at epoch {epoch}, example {example}")]
    NonFiniteLoss {
        epoch: usize,
        example: usize,
        loss: f64,
    },

    #[error("vocabulary hash mismatch: checkpoint has {expected}, vocabulary has {found}")]
    VocabularyMismatch { expected: String, found: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("gold response `{0}` is not in the candidate set")]
    GoldNotInCandidates(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// True for errors caused by bad data files rather than bad arguments or numerics.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Io(_)
                | Error::Json(_)
                | Error::Csv(_)
                | Error::VocabularyMismatch { .. }
                | Error::Checkpoint(_)
                | Error::GoldNotInCandidates(_)
                | Error::NoRuleFired(_)
                | Error::InsufficientScenarios { .. }
        )
    }
}
