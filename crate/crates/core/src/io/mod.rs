//! File formats and report emission.

pub mod config;
pub mod npy;
pub mod records;

pub use config::RunConfig;
