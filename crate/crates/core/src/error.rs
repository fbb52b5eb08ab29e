use std::fmt;
use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

/// A single field-level problem found while parsing or validating a
/// configuration document.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// 1-based line number, or 0 when the problem is not tied to a line
    /// (e.g. a cross-field invariant).
    pub line: usize,
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "line {}: {}: {}", self.line, self.field, self.message)
        } else {
            write!(f, "{}: {}", self.field, self.message)
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("configuration rejected:\n{}", format_config_errors(.0))]
    ConfigFields(Vec<ConfigError>),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("non-finite state at step {step} (t = {time}): solver diverged")]
    BlowUp { step: usize, time: f64 },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn format_config_errors(errors: &[ConfigError]) -> String {
    errors
        .iter()
        .map(|e| format!("  {e}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the user's configuration rather than by the
    /// run itself.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::ConfigFields(_))
    }
}
