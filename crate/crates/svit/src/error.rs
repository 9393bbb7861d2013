use std::path::{Path, PathBuf};

/// Errors of the tooling layer.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] svit_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("record {id:?} (line {line}): {reason}")]
    Annotation { line: usize, id: String, reason: String },
    #[error("config key {key:?}: {reason}")]
    ConfigKey { key: String, reason: String },
    #[error("{0}")]
    Usage(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Short stable category for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Core(svit_core::Error::NonFiniteLoss { .. }) => "non_finite_loss",
            Error::Core(svit_core::Error::Config(_)) => "config",
            Error::Core(_) => "core",
            Error::Io { .. } => "io",
            Error::Format { .. } => "format",
            Error::Parse { .. } => "parse",
            Error::Annotation { .. } => "annotation",
            Error::ConfigKey { .. } => "config",
            Error::Usage(_) => "usage",
        }
    }

    /// One-line JSON object describing the error.
    pub fn report_line(&self) -> String {
        serde_json::json!({ "error": self.kind(), "message": self.to_string() }).to_string()
    }
}

pub fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

pub fn format_err(path: &Path, reason: impl std::fmt::Display) -> Error {
    Error::Format { path: path.to_path_buf(), reason: reason.to_string() }
}
