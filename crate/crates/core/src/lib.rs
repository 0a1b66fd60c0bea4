//! Lung-sound classification from texture of the mel spectral image.
//!
//! The pipeline runs per respiration cycle:
//!
//! 1. [`audio_io`] loads a pre-segmented 16-bit PCM cycle, resamples it to
//!    4 kHz and normalizes its amplitude.
//! 2. [`spectral`] frames the cycle, takes short-term power spectra and
//!    applies a mel filterbank to obtain log filterbank energies (MFSC).
//! 3. [`texture`] computes uniform local binary patterns over the MFSC
//!    matrix and stacks one normalized 58-bin histogram per interior filter.
//! 4. [`classifiers`] provides kNN, SMO-trained SVM (linear, Bhattacharyya,
//!    intersection, RBF kernels) and an RProp-trained MLP.
//! 5. [`selection`] implements mRMR over discretized features and
//!    [`eval`] runs leave-one-out evaluation at cycle or subject level.
//!
//! [`baselines`] holds the comparison features (db8 wavelet statistics,
//! MFCC/MFSC means, morphological statistics) and [`synth`] generates
//! labeled synthetic cycles so the whole chain can run without clinical data.

pub mod audio_io;
pub mod baselines;
pub mod classifiers;
pub mod cli;
pub mod config;
pub mod eval;
pub mod selection;
pub mod spectral;
pub mod synth;
pub mod texture;

mod error;

pub use error::{Error, Result};
