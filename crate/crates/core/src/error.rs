use std::path::PathBuf;

/// Every failure the toolkit reports.
///
/// Variants are grouped by how a command-line caller should react; see
/// [`Error::exit_code`].
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid value for `{key}`: {reason}")]
    InvalidConfig { key: String, reason: String },

    #[error("{}", format_error_message(*.offset, .message))]
    Format { offset: Option<u64>, message: String },

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("undefined score: {0}")]
    UndefinedScore(String),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

fn format_error_message(offset: Option<u64>, message: &str) -> String {
    match offset {
        Some(offset) => format!("format error at byte {offset}: {message}"),
        None => format!("format error: {message}"),
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn format(offset: impl Into<Option<u64>>, message: impl Into<String>) -> Self {
        Error::Format {
            offset: offset.into(),
            message: message.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps `self` with the name of the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Process exit code for this error.
    ///
    /// `1` usage (bad flags, geometry, config values), `2` format (unreadable
    /// or mismatched inputs), `3` computation (degenerate data).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) | Error::InvalidGeometry(_) | Error::InvalidConfig { .. } => 1,
            Error::ShapeMismatch(_)
            | Error::Format { .. }
            | Error::Consistency(_)
            | Error::Io { .. } => 2,
            Error::Degenerate(_) | Error::UndefinedScore(_) => 3,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }
}
