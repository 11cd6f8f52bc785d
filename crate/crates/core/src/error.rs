use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = NuqError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum NuqError {
    /// A configuration value violates its invariant. `field` names the key.
    #[error("invalid configuration `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("rejection sampler starved after {retries} retries (alpha={alpha}, beta={beta}, s_min={s_min})")]
    SamplingStarvation {
        alpha: f64,
        beta: f64,
        s_min: f64,
        retries: usize,
    },

    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("non-finite value: {0}")]
    Numerical(String),

    /// Checkpoint and requested configuration disagree.
    #[error("checkpoint incompatible with requested configuration: {}", .0.join("; "))]
    Incompatible(Vec<String>),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error at {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error(transparent)]
    Tensor(#[from] candle_core::Error),
}

impl NuqError {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        NuqError::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        NuqError::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        NuqError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by user input (configuration, usage, missing or
    /// incompatible inputs) rather than by a failure during computation.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            NuqError::Config { .. } | NuqError::Incompatible(_) | NuqError::Format { .. }
        ) || matches!(self, NuqError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound)
    }
}
