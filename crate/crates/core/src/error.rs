use std::path::PathBuf;

use thiserror::Error;

use crate::raster_io::Band;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),

    #[error("semantic error: {0}")]
    Semantic(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("{index} requires the {band} band, which the raster does not carry")]
    MissingBand { index: &'static str, band: Band },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    #[error("content error: {0}")]
    Content(String),

    #[error("stage `{stage}` artifact missing: {}", path.display())]
    Dependency { stage: &'static str, path: PathBuf },

    #[error("unpaired masks: {}", orphans.join(", "))]
    Pairing { orphans: Vec<String> },

    #[error("quality inspection left {} sample(s) below threshold: {}", rejected.len(), rejected.join(", "))]
    PartialQuality { rejected: Vec<String> },

    #[error("image `{id}`: {source}")]
    Image {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Wraps an error with the id of the image being processed.
    pub fn for_image(self, id: impl Into<String>) -> Self {
        Error::Image {
            id: id.into(),
            source: Box::new(self),
        }
    }

    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end.
    ///
    /// `2` is left to the argument parser for usage errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Image { source, .. } => source.exit_code(),
            Error::Config(_) => 3,
            Error::Dependency { .. } => 4,
            Error::Pairing { .. } => 5,
            Error::PartialQuality { .. } => 6,
            _ => 1,
        }
    }
}
