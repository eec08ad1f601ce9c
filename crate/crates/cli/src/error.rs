use std::path::PathBuf;

use subpop_core::{DataError, EstimationError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {what}: {message}")]
    Format { what: &'static str, message: String },
    #[error("metric inputs differ in length ({pred} predictions, {truth} labels)")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("metric needs at least one row")]
    EmptyMetric,
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error("{failed} of {total} replications failed (limit is 20%); first failure: {first}")]
    TooManyFailures {
        failed: usize,
        total: usize,
        first: String,
    },
}

impl CliError {
    /// Process exit code: 1 usage/config, 2 data, 3 estimation.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Io { .. }
            | CliError::Format { .. }
            | CliError::LengthMismatch { .. }
            | CliError::EmptyMetric
            | CliError::Data(_) => 2,
            CliError::Estimation(EstimationError::Data(_)) => 2,
            CliError::Estimation(_) | CliError::TooManyFailures { .. } => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

pub fn read_to_string(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_string(path: &std::path::Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}
