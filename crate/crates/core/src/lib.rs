//! Concept-drift detection and trust scoring for batched tabular streams.

pub mod classifier;
pub mod data;
pub mod error;
pub mod eval;
pub mod matrix;
pub mod neural;
pub mod pipeline;
pub mod preprocess;
pub mod seed;
pub mod stat_drift;
pub mod stats;
pub mod synth;
pub mod trust;

pub use error::{Error, Result};
pub use matrix::Matrix;
