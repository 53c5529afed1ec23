use std::path::{Path, PathBuf};

use flowlab_core::FlowError;
use thiserror::Error;

pub type BenchResult<T> = std::result::Result<T, BenchError>;

/// Harness failures, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config error: {0}")]
    Config(String),

    #[error("path error: {}: {source}", path.display())]
    Path {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl BenchError {
    pub fn config(msg: impl Into<String>) -> Self {
        BenchError::Config(msg.into())
    }

    pub fn path(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        BenchError::Path {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    /// 2 for config and path errors, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) | BenchError::Path { .. } => 2,
            BenchError::Numerical(_) => 3,
        }
    }
}

impl From<FlowError> for BenchError {
    fn from(e: FlowError) -> Self {
        if e.is_numerical() {
            BenchError::Numerical(e.to_string())
        } else {
            BenchError::Config(e.to_string())
        }
    }
}

impl From<csv::Error> for BenchError {
    fn from(e: csv::Error) -> Self {
        BenchError::Config(format!("csv: {e}"))
    }
}
