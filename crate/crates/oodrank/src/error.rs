use std::path::PathBuf;

use oodrank_core::Error as CoreError;

pub type Result<T, E = AppError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl AppError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io { path: path.into(), source }
    }

    /// 2 for usage errors, 3 for invalid or missing data, 4 for numeric
    /// failures during training or attribution.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Usage(_) => 2,
            AppError::Data(_) | AppError::Io { .. } | AppError::Parse { .. } => 3,
            AppError::Core(e) => match e {
                CoreError::InvalidArgument(_)
                | CoreError::UnknownMethod(_)
                | CoreError::GuessPerExample
                | CoreError::TooFewModels { .. } => 2,
                CoreError::Divergence { .. } | CoreError::NonFiniteGradient { .. } => 4,
                _ => 3,
            },
        }
    }
}
