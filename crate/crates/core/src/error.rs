use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate image id `{0}`")]
    DuplicateImage(String),

    #[error("image `{0}` not found in corpus")]
    UnknownImage(String),

    #[error("cannot decode image {}: {message}", path.display())]
    Image { path: PathBuf, message: String },

    #[error("image of {width}x{height} pixels is smaller than a {grid}x{grid} grid")]
    ImageTooSmall { width: u32, height: u32, grid: u32 },

    #[error("empty image")]
    EmptyImage,

    #[error("region `{0}` has an empty mask")]
    EmptyMask(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("missing {kind} feature for `{id}`")]
    MissingFeature { kind: &'static str, id: String },

    #[error("nothing to review")]
    NothingToReview,

    #[error("unknown item `{0}`")]
    UnknownItem(String),

    #[error("item `{0}` already decided")]
    AlreadyDecided(String),

    #[error("image `{0}` has no truth labels")]
    MissingTruth(String),

    #[error("empty training set")]
    EmptyTrainingSet,

    #[error("no collage tile could be loaded")]
    EmptyCollage,

    #[error("missing artifact {} (produced by `{producer}`)", path.display())]
    MissingArtifact { path: PathBuf, producer: &'static str },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
