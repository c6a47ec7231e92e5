use std::path::PathBuf;

/// Errors produced by the library.
///
/// Variants carry the offending path or field so that callers can report
/// them without extra context.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error at {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("JSON error at {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("missing file: {0}")]
    Missing(String),

    #[error("schema violation in {path}: {field}: {message}")]
    Schema {
        path: PathBuf,
        field: String,
        message: String,
    },

    #[error("malformed {format} file {path}: {message}")]
    Format {
        format: &'static str,
        path: PathBuf,
        message: String,
    },

    #[error("resolution mismatch for {what}: expected {expected}x{expected}, got {width}x{height}")]
    ResolutionMismatch {
        what: String,
        expected: u32,
        width: u32,
        height: u32,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("bad magic MLTP1 in checkpoint {0}")]
    BadMagic(PathBuf),

    #[error("view '{0}' missing from scene")]
    MissingView(String),

    #[error("fit diverged at iteration {iteration}: total loss is {value}")]
    Diverged { iteration: usize, value: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn schema(path: impl Into<PathBuf>, field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            field: field.into(),
            message: message.into(),
        }
    }
}
