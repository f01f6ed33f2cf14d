use thiserror::Error;

/// Errors raised across the toolkit.
///
/// The variants line up with the process exit codes used by the command
/// line front end: usage and parse problems (2), artifact problems (3) and
/// numerical failures (4).
#[derive(Debug, Error)]
pub enum Error {
    #[error("usage error: {0}")]
    Usage(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid tag `{0}`")]
    InvalidTag(String),

    #[error("artifact error: {0}")]
    Artifact(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("alignment failed: {0}")]
    Alignment(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Parse { .. } | Error::InvalidTag(_) | Error::Io(_) => 2,
            Error::Artifact(_) => 3,
            Error::Numerical(_) | Error::Alignment(_) => 4,
        }
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
