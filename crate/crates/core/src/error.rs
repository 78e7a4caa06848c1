use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("signal has {len} samples, need at least {needed}")]
    SignalTooShort { len: usize, needed: usize },

    #[error("could not isolate {expected} line spectral frequencies (found {found})")]
    RootIsolationFailure { expected: usize, found: usize },

    #[error("line spectral frequencies must be strictly increasing inside (0, pi)")]
    InvalidOrdering,

    #[error("frame grid mismatch: {0}")]
    GridMismatch(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("image is {width}x{height}, too small for {tiles_x}x{tiles_y} tiles")]
    ImageTooSmall {
        width: usize,
        height: usize,
        tiles_x: usize,
        tiles_y: usize,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("expected {expected} views, got {got}")]
    ViewCountMismatch { expected: usize, got: usize },

    #[error("non-finite loss on sample {sample}")]
    NonFiniteLoss { sample: String },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("empty view set")]
    EmptyViewSet,

    #[error("no results to report")]
    EmptyResults,

    #[error("signal lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),

    #[error("reference signal has no non-silent frames")]
    SilentReference,

    #[error("feature tracks differ: {0}")]
    TrackMismatch(String),

    #[error("external tool failed: {0}")]
    ToolFailure(String),

    #[error("clip {clip_id}: views disagree on frame count ({detail})")]
    ViewFrameCountMismatch { clip_id: String, detail: String },

    #[error("missing file {0}")]
    MissingFile(PathBuf),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unsupported format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<hound::Error> for Error {
    fn from(e: hound::Error) -> Self {
        match e {
            hound::Error::IoError(io) => Error::Io(io),
            other => Error::Format(other.to_string()),
        }
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
