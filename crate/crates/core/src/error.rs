use std::path::PathBuf;

use thiserror::Error;

/// Error type shared by every module of the crate.
#[derive(Debug, Error)]
pub enum TaasError {
    #[error("dimension mismatch in {op}: left is {left_rows}x{left_cols}, right is {right_rows}x{right_cols}")]
    Dimension {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid configuration field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("{path}:{line}: {reason}")]
    Record { path: PathBuf, line: usize, reason: String },

    #[error("empty corpus: {0}")]
    EmptyCorpus(String),

    #[error("sequence has no unmasked positions")]
    EmptySequence,

    #[error("training diverged at epoch {epoch}, batch {batch}: {what} is not finite")]
    Divergence { epoch: usize, batch: usize, what: &'static str },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl TaasError {
    pub(crate) fn dims(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        TaasError::Dimension {
            op,
            left_rows: left.0,
            left_cols: left.1,
            right_rows: right.0,
            right_cols: right.1,
        }
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        TaasError::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by user-supplied configuration or inputs rather
    /// than by a failure while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            TaasError::Config { .. } | TaasError::Record { .. } | TaasError::EmptyCorpus(_)
        )
    }
}

pub type Result<T, E = TaasError> = std::result::Result<T, E>;
