//! Hierarchical kNN-graph index for approximate nearest-neighbor search.
//!
//! Build a [`Hierarchy`](graph::Hierarchy) with [`build::build`], query it
//! with [`search::query`], and measure it against [`eval::brute_force_oracle`].

pub mod build;
pub mod config;
pub mod data;
pub mod eval;
pub mod graph;
mod rng;
pub mod search;
pub mod shard;

pub use build::{build, BuildConfig, BuildError, BuildStats};
pub use data::{distance, Dataset, QuerySet};
pub use graph::{Hierarchy, GraphStats};
pub use search::{query, QueryConfig, QueryResult};
