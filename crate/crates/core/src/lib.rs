//! AutoShot: neural architecture search for shot boundary detection.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`]: float64 tensors and a reverse-mode autodiff graph with the
//!   handful of primitives the detection network needs.
//! - [`blocks`]: the architecture code, the four factorized dilated 3D
//!   convolution block families, the full detection network and its MAC count.
//! - [`train`]: SuperNet training with single-path uniform sampling, candidate
//!   retraining, distillation, entropy-based weight grafting and checkpoints.
//! - [`search`]: Gaussian-process Bayesian optimisation over architecture codes.
//! - [`annotation`]: shot annotation text format, frame containers, thumbnails
//!   and the synthetic video generator.
//! - [`metrics`]: boundary decoding, tolerance matching, F1 and precision at a
//!   fixed recall.
//!
//! Frame indices are 0-based everywhere.

pub mod annotation;
pub mod blocks;
pub mod error;
pub mod metrics;
pub mod search;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
