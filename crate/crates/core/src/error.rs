use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image decode error on {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("malformed {format} data: {reason}")]
    Malformed { format: &'static str, reason: String },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: &'static str, found: String },

    #[error("dimension mismatch: expected {expected_width}x{expected_height}, got {width}x{height}")]
    DimensionMismatch {
        expected_width: u32,
        expected_height: u32,
        width: u32,
        height: u32,
    },

    #[error("class id {class_id} at pixel {pixel} out of range for {num_classes} classes")]
    ClassOutOfRange {
        pixel: usize,
        class_id: u32,
        num_classes: u32,
    },

    #[error("probabilities at pixel {pixel} sum to {sum}, not 1")]
    NotNormalized { pixel: usize, sum: f64 },

    #[error("probability {value} at pixel {pixel} class {class} outside [0, 1]")]
    ProbabilityOutOfRange {
        pixel: usize,
        class: usize,
        value: f32,
    },

    #[error("region {0} is empty")]
    EmptyRegion(u32),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no eligible candidates for selection")]
    NoEligibleCandidates,

    #[error("query has no non-ignore pixels and cannot be answered")]
    Unanswerable,

    #[error("input values are not sorted ascending")]
    Unsorted,

    #[error("zero variance in correlation input")]
    ZeroVariance,

    #[error("metric undefined: {0}")]
    Undefined(&'static str),

    #[error("pixel {pixel} of image {image_id} labeled both {first} and {second}")]
    ConflictingLabels {
        image_id: u32,
        pixel: u32,
        first: u16,
        second: u16,
    },

    #[error("missing artifact: {0}")]
    MissingArtifact(PathBuf),

    #[error("missing probability map for image {0}")]
    MissingProbMap(u32),

    #[error("unknown image id {0}")]
    UnknownImage(u32),

    #[error("unknown query {0}")]
    QueryNotFound(u64),

    #[error("query {0} is no longer pending")]
    QueryClosed(u64),

    #[error("invalid state: {0}")]
    State(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(format: &'static str, reason: impl Into<String>) -> Self {
        Error::Malformed {
            format,
            reason: reason.into(),
        }
    }
}
