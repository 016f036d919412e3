//! Simulation and verification lab for weighted depths, weighted path length,
//! the weighted Wiener index and the weighted silhouette of random binary
//! search trees.

pub mod aggregates;
pub mod error;
pub mod experiments;
pub mod fixed_point;
pub mod limit_laws;
pub mod oracle;
pub mod quadrature;
pub mod rng;
pub mod sampling;
pub mod silhouette;
pub mod stats;
pub mod tree;

pub use error::{Error, Result};
