use std::path::PathBuf;

use crate::cloud::Side;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path} at {location}: {message}")]
    Parse {
        path: PathBuf,
        location: String,
        message: String,
    },

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("labels length {labels} does not match point count {points}")]
    LabelCount { points: usize, labels: usize },

    #[error("principal axes are ambiguous: eigenvalues {eigenvalues:?}")]
    AmbiguousAxes { eigenvalues: [f64; 3] },

    #[error("point sets have different lengths ({source_len} vs {target_len})")]
    LengthMismatch { source_len: usize, target_len: usize },

    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("binary image has no set pixels")]
    EmptyImage,

    #[error("sternum boundary not found on the {0} side")]
    BoundaryNotFound(&'static str),

    #[error("flood fill seed ({x}, {y}) lies in a masked or empty pixel")]
    EmptyRegion { x: usize, y: usize },

    #[error("segmentation incomplete on the {side} side: {found} of 4 branches found")]
    SegmentationIncomplete { side: String, found: usize },

    #[error("orientation is ambiguous: {0}")]
    OrientationAmbiguous(String),

    #[error("missing cartilage branch {side} level {level}")]
    MissingBranch { side: Side, level: u8 },

    #[error("waypoint support insufficient: {count} points within {radius} mm")]
    InsufficientSupport { count: usize, radius: f64 },

    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

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

    /// Tag an error with the pipeline stage that raised it.
    pub fn at_stage(self, stage: &'static str) -> Self {
        match self {
            Error::Stage { .. } => self,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }

    /// The innermost error, past any stage tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
