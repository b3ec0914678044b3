use std::path::PathBuf;

/// Errors raised anywhere in the framework.
///
/// Variants are grouped by the exit-code family the CLI maps them to:
/// configuration problems, data/format problems, and numerical-correctness
/// failures.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("size error: {0}")]
    Size(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("format error in {field} at byte {offset}: {message}")]
    Format {
        field: String,
        offset: u64,
        message: String,
    },

    #[error("correctness error: {0}")]
    Correctness(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn format(field: impl Into<String>, offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            field: field.into(),
            offset,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for configuration-family errors (bad geometry, shapes, config).
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Shape(_) | Error::Geometry(_) | Error::Size(_) | Error::Config(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
