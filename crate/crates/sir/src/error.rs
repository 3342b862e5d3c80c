use std::path::{Path, PathBuf};

pub type Result<T, E = SirError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum SirError {
    #[error(transparent)]
    Engine(#[from] sir_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("integrity error in {context} at byte {offset}: {message}")]
    Integrity {
        context: String,
        offset: u64,
        message: String,
    },
    #[error("{context}: unsupported format version {found} (expected {expected})")]
    UnsupportedVersion { context: String, found: u32, expected: u32 },
    #[error("{context}: {message}")]
    Parse { context: String, message: String },
    #[error("config conflict: {0}")]
    ConfigConflict(String),
    #[error("{0}")]
    Invalid(String),
}

impl SirError {
    pub fn io(path: impl AsRef<Path>) -> impl FnOnce(std::io::Error) -> SirError {
        let path = path.as_ref().to_path_buf();
        move |source| SirError::Io { path, source }
    }

    pub fn integrity(context: impl Into<String>, offset: u64, message: impl Into<String>) -> Self {
        SirError::Integrity {
            context: context.into(),
            offset,
            message: message.into(),
        }
    }

    pub fn parse(context: impl Into<String>, message: impl std::fmt::Display) -> Self {
        SirError::Parse {
            context: context.into(),
            message: message.to_string(),
        }
    }

    /// Stable machine-readable code used by the HTTP API and `--json` output.
    pub fn code(&self) -> &'static str {
        use sir_core::Error as E;
        match self {
            SirError::Engine(E::NotFound(_)) => "not_found",
            SirError::Engine(E::Shape { .. }) => "shape_mismatch",
            SirError::Engine(E::OutOfWindow { .. }) => "out_of_window",
            SirError::Engine(E::FutureTimestamp { .. }) => "future_timestamp",
            SirError::Engine(E::Rule(_)) => "rule_error",
            SirError::Engine(E::InvalidJudgment(_)) => "invalid_judgment",
            SirError::Engine(E::MissingEmbeddings) => "missing_embeddings",
            SirError::Engine(_) => "invalid_request",
            SirError::Io { .. } => "io_error",
            SirError::Integrity { .. } => "integrity_error",
            SirError::UnsupportedVersion { .. } => "unsupported_version",
            SirError::Parse { .. } => "parse_error",
            SirError::ConfigConflict(_) => "config_conflict",
            SirError::Invalid(_) => "invalid_request",
        }
    }
}
