use std::path::PathBuf;

use thiserror::Error;

use crate::dataset::{ImageId, UserId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Runtime,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: duplicate (user, image) pair ({user_key}, {image_key})")]
    DuplicatePair {
        line: usize,
        user_key: String,
        image_key: String,
    },
    #[error("line {line}: image {image_key} already belongs to another interaction")]
    ConflictingImage { line: usize, image_key: String },
    #[error("sidecar does not match dataset: {0}")]
    SidecarMismatch(String),

    #[error("degenerate embedding (zero norm or non-finite)")]
    DegenerateEmbedding,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("unsupported embedding dimension {0} (baseline supports 48 or 192)")]
    UnsupportedDim(usize),
    #[error("embedding file has wrong magic bytes")]
    BadMagic,
    #[error("unsupported embedding file version {0}")]
    UnsupportedVersion(u32),
    #[error("embedding file is truncated")]
    TruncatedFile,
    #[error("embedding file has {0} trailing bytes")]
    TrailingBytes(usize),
    #[error("duplicate embedding for image {0}")]
    DuplicateEmbedding(ImageId),
    #[error("non-finite value in embedding for image {0}")]
    NonFiniteEmbedding(ImageId),
    #[error("no embedding for image {0}")]
    MissingEmbedding(ImageId),

    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("no pixel data for image {0}")]
    MissingImageFile(ImageId),
    #[error("corrupt PNG: {0}")]
    PngCorrupt(String),
    #[error("unsupported PNG bit depth {0}")]
    UnsupportedBitDepth(u8),

    #[error("user {0} has no positive training images")]
    NoPositives(UserId),
    #[error("review text is empty")]
    EmptyReview,
    #[error("generated image missing: {0}")]
    GeneratedImageMissing(PathBuf),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("user {0} is outside the model's user table")]
    UnknownUser(UserId),
    #[error("training split is empty")]
    EmptyTrainSplit,
    #[error("user {0} owns every image; no negative can be drawn")]
    NoNegativeAvailable(UserId),
    #[error("invalid checkpoint: {0}")]
    BadCheckpoint(String),

    #[error("metering scopes cannot be nested")]
    NestedScope,

    #[error("config: {0}")]
    Config(String),
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::InvalidParameter(_) | Error::UnsupportedDim(_) => {
                ErrorKind::Config
            }
            Error::Stage { source, .. } => source.kind(),
            Error::EmptyDataset
            | Error::MalformedLine { .. }
            | Error::DuplicatePair { .. }
            | Error::ConflictingImage { .. }
            | Error::SidecarMismatch(_)
            | Error::BadMagic
            | Error::UnsupportedVersion(_)
            | Error::TruncatedFile
            | Error::TrailingBytes(_)
            | Error::DuplicateEmbedding(_)
            | Error::NonFiniteEmbedding(_)
            | Error::MissingEmbedding(_)
            | Error::InvalidImage(_)
            | Error::MissingImageFile(_)
            | Error::PngCorrupt(_)
            | Error::UnsupportedBitDepth(_)
            | Error::GeneratedImageMissing(_)
            | Error::BadCheckpoint(_)
            | Error::EmptyTrainSplit
            | Error::Io { .. }
            | Error::Json(_) => ErrorKind::Data,
            _ => ErrorKind::Runtime,
        }
    }
}
