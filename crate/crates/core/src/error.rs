use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed index {input:?}: {reason}")]
    MalformedIndex { input: String, reason: String },

    #[error("manifest parse error at line {line}: {message}")]
    ManifestParse { line: usize, message: String },

    #[error("sample {id:?} references missing image {path}")]
    MissingImage { id: String, path: PathBuf },

    #[error("duplicate sample id {0:?}")]
    DuplicateId(String),

    #[error("sample {0:?} has no character label")]
    UnlabeledSamplePresent(String),

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("pixel ({x}, {y}) is closer than {margin} px to the border of a {width}x{height} image")]
    OutOfBounds { x: usize, y: usize, margin: usize, width: usize, height: usize },

    #[error("image too small: {0}")]
    ImageTooSmall(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("training data contains a single class")]
    SingleClass,

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch { expected: Vec<usize>, actual: Vec<usize> },

    #[error("cache was produced by a different parameter version")]
    StaleCache,

    #[error("training split is empty")]
    EmptyTrainSet,

    #[error("non-finite value encountered during {0}")]
    NonFinite(&'static str),

    #[error("checkpoint checksum mismatch")]
    ChecksumMismatch,

    #[error("unsupported checkpoint format: {0}")]
    VersionMismatch(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("no fusion members given")]
    EmptyMembers,

    #[error("all fusion weights are zero")]
    AllZeroWeights,

    #[error("missing fusion member {0:?}")]
    MissingMember(String),

    #[error("split {0} has no samples")]
    EmptySplit(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io { path: path.to_path_buf(), source }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    /// True for errors caused by bad configuration rather than bad data.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig(_)
                | Error::MalformedIndex { .. }
                | Error::VersionMismatch(_)
                | Error::MissingMember(_)
                | Error::LengthMismatch { .. }
                | Error::EmptyMembers
                | Error::AllZeroWeights
        )
    }
}
