//! Layered fixed-degree adjacency storage and index persistence.

mod hierarchy;
mod layer;
mod persist;

pub use hierarchy::{Geometry, GraphStats, Hierarchy, LayerPoints};
pub use layer::{AdjacencyLayer, InsertOutcome, NodeMut, EMPTY};
pub use persist::{decode_index, encode_index, load_index, save_index, FORMAT_VERSION};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("node {node} out of range for layer of {node_count} nodes")]
    NodeOutOfRange { node: u32, node_count: usize },
    #[error("node {0} cannot link to itself")]
    SelfLoop(u32),
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported index version {found} (reader supports {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checksum mismatch")]
    Checksum,
    #[error("truncated index at byte offset {offset}")]
    Truncated { offset: usize },
    #[error("corrupt index: {0}")]
    Corrupt(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
