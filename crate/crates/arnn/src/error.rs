use std::path::PathBuf;

use arnn_core::Error as CoreError;

/// Failures of the command-line pipeline, grouped by exit code.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("config: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("missing prerequisite: {0}")]
    Prerequisite(String),

    #[error("unknown items: {}", .0.join(", "))]
    Vocabulary(Vec<String>),

    #[error("training diverged in epoch {epoch}; last good checkpoint written to {checkpoint}")]
    Diverged { epoch: usize, checkpoint: PathBuf },

    /// Help or version text requested on the command line.
    #[error("{0}")]
    Help(String),

    #[error(transparent)]
    Core(#[from] CoreError),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) | AppError::Prerequisite(_) => 2,
            AppError::Core(CoreError::Config(_)) => 2,
            AppError::Help(_) => 0,
            AppError::Diverged { .. } => 4,
            AppError::Core(CoreError::NonFinite(_)) => 4,
            _ => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        AppError::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

pub type Result<T, E = AppError> = std::result::Result<T, E>;
