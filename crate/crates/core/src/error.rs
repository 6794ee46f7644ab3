use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("file not found: {0}")]
    MissingFile(PathBuf),

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("unsupported maxval {0}, only 255 is accepted")]
    UnsupportedMaxval(u32),

    #[error("truncated pixel payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("image too small: {width}x{height}, need at least {min}x{min}")]
    ImageTooSmall { width: u32, height: u32, min: u32 },

    #[error("({x}, {y}) is too close to the border (margin {margin})")]
    OutOfBounds { x: i64, y: i64, margin: u32 },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("expected 68 points, found {0}")]
    LandmarkCount(usize),

    #[error("ragged descriptors: expected length {expected}, found {found}")]
    Ragged { expected: usize, found: usize },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("incompatible artifacts: {0}")]
    Incompatible(String),

    #[error("model file version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("corrupted model: {0}")]
    CorruptModel(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }

    /// True for errors caused by mismatched provenance between artifacts.
    pub fn is_compatibility(&self) -> bool {
        matches!(self, Error::Incompatible(_) | Error::Version { .. })
    }
}
