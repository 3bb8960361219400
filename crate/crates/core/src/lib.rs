//! Rank testing for incompletely observed low-rank matrices.
//!
//! The crate estimates the rank of a noisy, partially observed matrix with a
//! scale-free variance-ratio test built from nested sub-sampling, and applies
//! it (together with rotation-based detectors) to counting unimodal sources in
//! a sparsely sampled 2-D energy field.

pub mod cli;
pub mod completion;
pub mod detectors;
pub mod error;
pub mod eval;
pub mod fields;
pub mod io;
pub mod matrix;
pub mod rng;
pub mod rotation;
pub mod scenario;
pub mod stats;
pub mod suite;
pub mod synth;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
