use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read or write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("unsupported graph format version {found} (expected {expected})")]
    FormatVersion { found: u32, expected: u32 },

    #[error("not a version token: {0:?}")]
    InvalidVersion(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("confidence is undefined when there is no evidence")]
    EmptyEvidence,

    #[error("duplicate relation for pair {0}")]
    DuplicateRelation(String),

    #[error("unrecognized query {query:?}; known components: {known}")]
    UnrecognizedQuery { query: String, known: String },

    #[error("{0}")]
    Data(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Tags an error with the pipeline stage that raised it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::Io { .. } => 3,
            Error::Config(_) => 1,
            _ => 2,
        }
    }
}
