//! Desk-scale laboratory for short-term voltage stability assessment.
//!
//! The crate covers the full offline pipeline: synthetic post-disturbance
//! trajectory generation, semi-supervised labeling through constrained
//! k-means, an LSTM sequence classifier trained with backpropagation through
//! time, shallow decision-tree and linear-SVM baselines, and the evaluation
//! metrics used to compare them.

pub mod baselines;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod simgen;
pub mod metrics;
pub mod lstm;
pub mod semilabel;

pub use error::{Error, Result};
