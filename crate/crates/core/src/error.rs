// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;

/// Errors raised across the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("non-finite value in {context} at coordinate {coordinate}")]
    NonFinite {
        context: &'static str,
        coordinate: usize,
    },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("training diverged at epoch {epoch} (learning rate {learning_rate})")]
    TrainingDiverged { epoch: usize, learning_rate: f64 },

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("i/o error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Self::Input(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad configuration or arguments rather than by the computation.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Self::Input(_) | Self::Dimension { .. } | Self::Usage(_) | Self::Json(_) | Self::Csv(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
