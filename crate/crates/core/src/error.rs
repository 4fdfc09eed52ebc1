use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: invalid JSON: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    /// A file exists but its content is malformed; `field` names the part
    /// that failed.
    #[error("{path}: {field}: {msg}")]
    Format {
        path: PathBuf,
        field: &'static str,
        msg: String,
    },

    /// Input violates a documented invariant (shapes, split sizes, ranges).
    #[error("{0}")]
    Invalid(String),

    #[error("unknown {kind} \"{name}\"; valid names: {}", valid.join(", "))]
    UnknownName {
        kind: &'static str,
        name: String,
        valid: Vec<&'static str>,
    },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("dataset fingerprint {found} does not match the manifest's {expected}")]
    Fingerprint { expected: String, found: String },

    #[error("{path}: {source}")]
    Weights {
        path: PathBuf,
        #[source]
        source: slidens_tensor::TensorError,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Self::Json { path: path.into(), source }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Self::Invalid(msg.into())
    }

    /// True for errors caused by bad user input rather than the runtime.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Self::Invalid(_) | Self::UnknownName { .. } | Self::Format { .. } | Self::Fingerprint { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
