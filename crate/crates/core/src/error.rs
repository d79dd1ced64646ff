use std::path::PathBuf;

use thiserror::Error;

/// Toolkit-wide error type. Variants map onto the CLI exit codes:
/// config errors exit 2, data errors exit 3, backend errors exit 4.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("ingestion error: missing transcript file for id `{id}` (expected {path})")]
    MissingTranscript { id: String, path: PathBuf },

    #[error("data error: {0}")]
    Data(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("backend `{backend_id}` failed at stage `{stage}`{}: {message}",
            sample_id.as_deref().map(|s| format!(" on sample `{s}`")).unwrap_or_default())]
    Backend {
        backend_id: String,
        stage: String,
        sample_id: Option<String>,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn backend(
        backend_id: impl Into<String>,
        stage: impl Into<String>,
        sample_id: Option<&str>,
        message: impl Into<String>,
    ) -> Self {
        Error::Backend {
            backend_id: backend_id.into(),
            stage: stage.into(),
            sample_id: sample_id.map(str::to_owned),
            message: message.into(),
        }
    }

    /// CLI exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::MissingTranscript { .. }
            | Error::Data(_)
            | Error::Validation(_)
            | Error::Io { .. } => 3,
            Error::Backend { .. } => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
