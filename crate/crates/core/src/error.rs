use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates its constraint.
    #[error("invalid configuration: `{field}` {constraint}")]
    Config { field: String, constraint: String },

    #[error("configuration parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("undersampled beat: fs = {fs} Hz, need fs > {required_fs} Hz")]
    Undersampled { fs: f64, required_fs: f64 },

    #[error("time {t} s outside sweep [0, {limit}] s")]
    OutOfRange { t: f64, limit: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("pixel ({row}, {col}) outside {n}x{n} array")]
    Index { row: usize, col: usize, n: usize },

    #[error("analysis error: {0}")]
    Analysis(String),

    #[error("frame error: {0}")]
    Frame(String),

    #[error("report error: {0}")]
    Report(String),

    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, constraint: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            constraint: constraint.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Errors caused by the user's configuration or invocation rather than
    /// by the run itself.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config { .. }
                | Error::Parse { .. }
                | Error::Undersampled { .. }
                | Error::Usage(_)
        )
    }
}
