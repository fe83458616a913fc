use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("point {index} has non-positive depth {z} under a pinhole camera")]
    NonPositiveDepth { index: usize, z: f64 },
    #[error("audio is shorter than one video frame ({samples} samples at {sample_rate} Hz, {fps} fps)")]
    EmptyAudio { samples: usize, sample_rate: u32, fps: f64 },
    #[error("reference image is missing or empty")]
    EmptyReference,
    #[error("segmentation map contains no upper-body pixels")]
    NoBody,
    #[error("torso contour is degenerate: {0}")]
    DegenerateContour(String),
    #[error("polygon fitting needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("per-frame streams disagree in length: {0}")]
    CountMismatch(String),
    #[error("sequence too short: {0}")]
    TooShort(String),
    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: u64, detail: String },
    #[error("inconsistent windows: {0}")]
    InconsistentWindows(String),
    #[error("missing checkpoint: {0}")]
    MissingCheckpoint(PathBuf),
    #[error("missing stream: {0}")]
    MissingStream(String),
    #[error("dataset is empty: {0}")]
    DatasetEmpty(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn shape(expected: impl ToString, got: impl ToString) -> Self {
        Error::ShapeMismatch { expected: expected.to_string(), got: got.to_string() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Tags an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage { stage, source: Box::new(e) },
        }
    }

    /// The innermost error, skipping stage tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}
