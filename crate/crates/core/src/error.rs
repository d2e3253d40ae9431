use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value at flat index {index}")]
    NonFiniteValue { index: usize },
    #[error("channel mismatch: expected {expected} channels, got {got}")]
    ChannelMismatch { expected: usize, got: usize },
    #[error("shift ({dx}, {dy}) too large for a {h}x{w} map")]
    ShiftTooLarge { dx: isize, dy: isize, h: usize, w: usize },
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss([usize; 4]),
    #[error("spatial size {h}x{w} must be even for the Haar transform")]
    OddSpatialSize { h: usize, w: usize },
    #[error("channel count {0} is not divisible by 4")]
    ChannelNotDivisibleBy4(usize),
    #[error("spatial size {h}x{w} is not divisible by 2^{levels}")]
    NotDivisible { h: usize, w: usize, levels: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("input shape incompatible with model: {0}")]
    ShapeIncompatible(String),
    #[error("transform id {0} out of range 0..8")]
    BadTransformId(u8),
    #[error("image {h}x{w} is smaller than patch size {patch}")]
    ImageTooSmall { h: usize, w: usize, patch: usize },
    #[error("resize to zero-sized output from {h}x{w} at scale {scale}")]
    DegenerateOutput { h: usize, w: usize, scale: f64 },
    #[error("image too small for SSIM: {h}x{w} (needs at least 11x11)")]
    TooSmall { h: usize, w: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("synthetic image size {0} must be even and at least 32")]
    BadSize(usize),
    #[error("failed to decode {path}: {reason}")]
    Decode { path: PathBuf, reason: String },
    #[error("checkpoint version {found} not supported (expected {expected})")]
    VersionMismatch { found: String, expected: String },
    #[error("corrupt checkpoint payload: {0}")]
    CorruptPayload(String),
    #[error("failed to encode {path}: {reason}")]
    Encode { path: PathBuf, reason: String },
    #[error("training diverged at step {step}: loss {loss}")]
    Diverged { step: usize, loss: f64 },
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
