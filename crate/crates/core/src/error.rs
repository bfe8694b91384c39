use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::fl::DataError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid value for {key}: {msg}")]
    Config { key: String, msg: String },
    #[error("config parse error: {msg}{}", span.as_ref().map(|s| format!(" (at `{s}`)")).unwrap_or_default())]
    Parse { msg: String, span: Option<String> },
    #[error("{path}: {inner}")]
    InFile { path: PathBuf, inner: Box<SimError> },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SimError {
    /// Process exit code: 2 for configuration problems, 3 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Config { .. } | SimError::Parse { .. } => 2,
            SimError::InFile { inner, .. } => inner.exit_code(),
            SimError::Data(DataError::Format { .. }) => 2,
            SimError::Data(DataError::Io { .. }) | SimError::Io { .. } => 3,
        }
    }

    pub(crate) fn in_file(self, path: &Path) -> SimError {
        SimError::InFile {
            path: path.to_owned(),
            inner: Box::new(self),
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> SimError {
        SimError::Io {
            path: path.to_owned(),
            source,
        }
    }
}
