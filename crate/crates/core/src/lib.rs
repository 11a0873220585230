//! Epistemic uncertainty maps from Monte-Carlo dropout samples.
//!
//! The crate turns a stack of sampled class-probability volumes into ten
//! voxel-wise uncertainty maps, scores them against misclassification and
//! class masks, and compares maps pairwise with a Beta-binomial model.
//! A phantom generator provides data with known ground truth.

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod io;
pub mod maps;
pub mod measures;
pub mod stats;
pub mod synth;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
