//! Pedestrian trajectory representation learning.
//!
//! A grid abstraction turns a constrained floor plan into a road network of
//! cells. A bidirectional LSTM encoder summarizes a trajectory into a
//! fixed-length vector, and a mask-constrained decoder reconstructs it as a
//! sequence of movement actions. The autoencoder is pretrained by maximum
//! likelihood and refined with an actor-critic loop whose reward tolerates a
//! bounded per-step hop distance from the ground truth.

pub mod actor;
pub mod critic;
pub mod data;
pub mod embed;
pub mod error;
pub mod eval;
pub mod grid;
pub mod nn;
pub mod presets;
pub mod rng;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use grid::{Action, Cell, GridSpec, OccupancyMap, RoadNetwork, Trajectory, VertexId};

/// Road network plus the frozen cell embeddings every network consumes.
#[derive(Debug, Clone)]
pub struct Env {
    pub net: RoadNetwork,
    pub embeddings: embed::EmbeddingTable,
}

impl Env {
    pub fn new(net: RoadNetwork, embeddings: embed::EmbeddingTable) -> Result<Self> {
        embeddings.check_network(&net)?;
        Ok(Self { net, embeddings })
    }
}
