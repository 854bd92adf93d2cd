use std::path::PathBuf;

use thiserror::Error;

use crate::container::TensorError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input syntax (JSON, CSV, config text).
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    /// Well-formed input that violates a data invariant.
    #[error("validation error in video '{video_id}', field '{field}': {message}")]
    Validation {
        video_id: String,
        field: String,
        message: String,
    },

    /// Argument outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("consistency undefined for fewer than 2 annotators (video '{0}')")]
    ConsistencyUndefined(String),

    #[error("missing f1_consistency for annotator '{annotator_id}' in video '{video_id}'; run compute_f1_consistency first")]
    MissingConsistency {
        video_id: String,
        annotator_id: String,
    },

    #[error("weighted selection undefined: all consistency scores are zero (video '{0}')")]
    WeightedSelectionUndefined(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("missing frame {index} in {dir}")]
    MissingFrame { dir: PathBuf, index: usize },

    #[error("training error: {0}")]
    Training(String),

    #[error("video id mismatch: {0}")]
    VideoMismatch(String),

    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {message}")]
    Image { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn validation(video_id: &str, field: &str, message: impl Into<String>) -> Self {
        Error::Validation {
            video_id: video_id.to_string(),
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
