use std::path::PathBuf;

use thiserror::Error;

use crate::analysis::AnalysisError;
use crate::attacks::AttackError;
use crate::defense::{DefenseError, QueryError};
use crate::nn::NnError;

/// IDX decoding failures, each with its own variant.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum IdxError {
    #[error("{path}: bad magic at offset {offset}: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { path: PathBuf, offset: usize, expected: u32, found: u32 },
    #[error("{path}: truncated: need {expected} bytes, have {got}")]
    Truncated { path: PathBuf, expected: usize, got: usize },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("{path}: label {label} at index {index} is not a digit")]
    BadLabel { path: PathBuf, index: usize, label: u8 },
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Idx(#[from] IdxError),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Defense(#[from] DefenseError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    /// Problems with the user's configuration, as opposed to failures while
    /// running it.
    pub fn is_config(&self) -> bool {
        matches!(self, Self::Config(_))
    }
}
