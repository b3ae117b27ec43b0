//! Near-field beam training for extremely large-scale MIMO.
//!
//! The crate covers the whole pipeline: exact near-field channel synthesis,
//! polar-domain and far-field codebooks, the pilot measurement model, a small
//! CNN engine with hand-written backpropagation, labelled dataset generation
//! and training, the two network-driven beam-selection schemes, and a
//! Monte-Carlo experiment runner that writes CSV results.

pub mod codebook;
pub mod config;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod linalg;
pub mod measurement;
pub mod nn;
pub mod schemes;
pub mod seed;
pub mod training;

pub use error::{Error, Result};
