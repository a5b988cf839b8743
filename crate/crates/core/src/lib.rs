//! Phase-aware Bayesian short-time spectral amplitude estimation.
//!
//! The crate follows the analysis-modification-synthesis chain:
//! [`stft`] frames the signal, [`tracking`] follows the noise PSD and the
//! a-priori SNR, [`phase`] supplies a clean-phase estimate, [`gains`] turns
//! all of that into a spectral gain and [`enhance`] runs the whole pass over
//! an utterance. [`metrics`] holds the evaluation side.

// `!(x > 0.0)` is how NaN gets rejected; series coefficients are kept as published
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod config;
pub mod enhance;
pub mod error;
pub mod gains;
pub mod metrics;
pub mod phase;
pub mod specfun;
pub mod stft;
pub mod tracking;
pub mod wav;

pub use config::EnhancerConfig;
pub use enhance::{enhance_signal, enhance_spectrogram, EnhanceReport, PhaseInputs};
pub use error::{Error, Result};
pub use stft::{FrameGeometry, Spectrogram, WindowKind};
