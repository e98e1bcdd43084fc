//! Dynamic sign-language gesture recognition from short frame sequences.
//!
//! The pipeline runs in stages, each in its own module:
//!
//! - [`manifest`]: dataset catalogs (clip, label, signer, split).
//! - [`videoio`]: frame loading, temporal sampling, bilinear resizing.
//! - [`preprocess`]: previous-frame background subtraction and median denoising.
//! - [`features`]: per-frame embeddings from a frozen backbone, plus the on-disk cache.
//! - [`nets`]: MLP and LSTM classification heads trained from scratch.
//! - [`eval`]: metrics, confusion matrices, the sequence-length sweep and reports.
//!
//! [`synth`] generates a procedural gesture dataset so the whole pipeline can
//! run without private video data or downloaded models, and [`pipeline`] wires
//! the featurization stage over a manifest.

pub mod error;
pub mod eval;
pub mod features;
pub mod io;
pub mod manifest;
pub mod nets;
pub mod pipeline;
pub mod preprocess;
pub mod rng;
pub mod synth;
pub mod videoio;

pub use error::{Error, FormatError, Result};
