use thiserror::Error;

use crate::audio_io::AudioError;
use crate::baselines::BaselineError;
use crate::classifiers::ClassifierError;
use crate::eval::EvalError;
use crate::selection::SelectionError;
use crate::spectral::SpectralError;
use crate::texture::TextureError;

/// Crate-level error, wrapping the per-stage errors.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Texture(#[from] TextureError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed file {path}: {reason}")]
    Format { path: String, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
