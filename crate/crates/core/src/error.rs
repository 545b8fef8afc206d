use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid crop window {w_x}x{w_y}: both sides must be odd and at least 3")]
    InvalidWindow { w_x: usize, w_y: usize },

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("resize to {target_w}x{target_h} would upscale a {width}x{height} image")]
    UpscaleRequested {
        width: usize,
        height: usize,
        target_w: usize,
        target_h: usize,
    },

    #[error("crop centered at ({i}, {j}) overhangs a {width}x{height} frame")]
    OutOfBounds {
        i: usize,
        j: usize,
        width: usize,
        height: usize,
    },

    #[error("image {width}x{height} is smaller than the {w_x}x{w_y} window")]
    ImageTooSmall {
        width: usize,
        height: usize,
        w_x: usize,
        w_y: usize,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid layer specification: {0}")]
    InvalidLayer(String),

    #[error("non-finite training loss in epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),

    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("corrupt checkpoint header: {0}")]
    CorruptHeader(String),

    #[error("checkpoint blob truncated: need {expected} bytes, found {actual}")]
    TruncatedBlob { expected: usize, actual: usize },

    #[error("SSR field has no valid positions")]
    EmptyField,

    #[error("3x3 neighborhood of ({i}, {j}) is not fully valid")]
    NoNeighborhood { i: usize, j: usize },

    #[error("no ground truth for frame {0}")]
    MissingGroundTruth(u64),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("degenerate labeling sigma (sigma_x = {sigma_x}, sigma_y = {sigma_y})")]
    DegenerateSigma { sigma_x: f64, sigma_y: f64 },

    #[error("reference point ({i}, {j}) is not a valid crop center in the reference frame")]
    InvalidReference { i: usize, j: usize },

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}
