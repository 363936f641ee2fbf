//! Octree-organized multi-scale surfel map with incremental moment statistics.

mod map;
mod stats;

pub use map::{CandidateSurfel, MapConfig, NodeKey, SurfelMap, UpdateSummary};
pub use stats::{derive_attributes, SurfelAttributes, SurfelError, SurfelStats};
