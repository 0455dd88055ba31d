//! Cluster-informed Mahalanobis metrics, diffusion embeddings and survival
//! statistics for high-dimensional data with correlated features.
//!
//! The crate is `no_std` and needs only `alloc`.

#![no_std]
extern crate alloc;
#[cfg(test)]
#[macro_use]
extern crate std;

pub mod cluster;
pub mod embedding;
pub mod error;
pub mod linalg;
pub mod metric;
pub mod pca;
pub mod rng;
pub mod special;
pub mod stats;
pub mod survival;
pub mod synth;

pub use error::{Error, Result};
pub use linalg::DataMatrix;
