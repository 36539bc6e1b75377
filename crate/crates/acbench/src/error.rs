use std::fmt;
use std::path::Path;

use acbench_core::ErrorKind;

pub type AppResult<T> = Result<T, AppError>;

/// Everything a command can fail with, grouped by exit code.
#[derive(Debug)]
pub enum AppError {
    Core(acbench_core::Error),
    /// A file does not match its schema (missing column, unparsable value).
    Schema { path: String, message: String },
    Config(String),
    Io { path: String, message: String },
}

impl AppError {
    pub fn io(path: &Path, err: impl fmt::Display) -> AppError {
        AppError::Io { path: path.display().to_string(), message: err.to_string() }
    }

    pub fn schema(path: &Path, err: impl fmt::Display) -> AppError {
        AppError::Schema { path: path.display().to_string(), message: err.to_string() }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            AppError::Core(e) if e.kind() == ErrorKind::Numeric => "numeric",
            AppError::Core(_) => "validation",
            AppError::Schema { .. } => "schema",
            AppError::Config(_) => "config",
            AppError::Io { .. } => "io",
        }
    }

    /// 2 validation, 3 numeric failure, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Core(e) if e.kind() == ErrorKind::Numeric => 3,
            AppError::Io { .. } => 4,
            _ => 2,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        })
        .to_string()
    }
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AppError::Core(e) => write!(f, "{e}"),
            AppError::Schema { path, message } => write!(f, "{path}: {message}"),
            AppError::Config(m) => write!(f, "{m}"),
            AppError::Io { path, message } => write!(f, "{path}: {message}"),
        }
    }
}

impl std::error::Error for AppError {}

impl From<acbench_core::Error> for AppError {
    fn from(e: acbench_core::Error) -> Self {
        AppError::Core(e)
    }
}
