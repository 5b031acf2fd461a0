// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;

use crate::checkpoint::CheckpointError;

pub type Result<T, E = LabError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{path}:{line}: {message}")]
    Dataset {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Core(#[from] fim_core::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("usage: {0}")]
    Usage(String),
    #[error("nothing to write: {0}")]
    EmptyInput(String),
}

impl LabError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> LabError {
        let path = path.into();
        move |source| LabError::Io { path, source }
    }

    /// Stable identifier for machine-readable error output.
    pub fn kind(&self) -> &'static str {
        match self {
            LabError::Io { .. } => "io",
            LabError::Checkpoint(CheckpointError::BadMagic) => "bad-magic",
            LabError::Checkpoint(CheckpointError::ShapeMismatch { .. }) => "shape-mismatch",
            LabError::Checkpoint(CheckpointError::Truncated { .. }) => "truncated",
            LabError::Checkpoint(_) => "checkpoint",
            LabError::Dataset { .. } => "dataset",
            LabError::Core(_) => "pipeline",
            LabError::Json(_) => "json",
            LabError::Csv(_) => "csv",
            LabError::Usage(_) => "usage",
            LabError::EmptyInput(_) => "empty-input",
        }
    }
}
