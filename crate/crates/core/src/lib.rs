//! Commit-aware throughput regression analysis for RAN test campaigns.

pub mod commitcat;
pub mod error;
pub mod ingest;
pub mod stats;
pub mod tree;
pub mod baseline;
pub mod residual;
pub mod risk;
pub mod pipeline;
pub mod store;
pub mod synthgen;

pub use error::{Error, Result};
