//! Restaurant-booking dialog testbed.
pub mod benchmark;
pub mod checkpoint;
pub mod corpus;
pub mod dense;
pub mod error;
pub mod embeddings;
pub mod eval;
pub mod features;
#[cfg(test)]
mod fixtures;
pub mod kb;
pub mod memnn;
pub mod parallel;
pub mod retrieval;
pub mod simulator;
pub mod training;
pub use error::{Error, Result};
