use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no frames matched in {0}")]
    NoFrames(PathBuf),
    #[error("frame {0} has different dimensions than frame 0")]
    DimensionMismatch(usize),
    #[error("saliency value {value} at pixel {index} is outside [0, 1]")]
    InvalidSaliency { index: usize, value: f64 },
    #[error("target superpixel count must be at least 1 (got {0})")]
    InvalidK(usize),
    #[error("region {0} is empty")]
    EmptyRegion(usize),
    #[error("histogram lengths differ ({0} vs {1})")]
    BinMismatch(usize, usize),
    #[error("maps have mismatched dimensions ({0}x{1} vs {2}x{3})")]
    MapMismatch(usize, usize, usize, usize),
    #[error("cellular automata fusion needs at least two maps (got {0})")]
    TooFewMaps(usize),
    #[error("no annotated frames to evaluate")]
    NoAnnotations,
    #[error("missing saliency map {0}")]
    MissingMap(PathBuf),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("malformed flow file: {0}")]
    FlowFormat(String),
    #[error("image error at {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn image(path: impl Into<PathBuf>, source: image::ImageError) -> Self {
        Error::Image {
            path: path.into(),
            source,
        }
    }
}
