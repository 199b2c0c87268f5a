use crate::error::{Error, Result};
use crate::grid::{Action, RoadNetwork, Trajectory, VertexId};
use crate::rng::Rng;
use rand::seq::index;
use std::collections::VecDeque;

/// A ground-truth trajectory and the actions generated to reconstruct it.
#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    truth: Trajectory,
    actions: Vec<Action>,
    recon: Vec<VertexId>,
}

impl Experience {
    /// Replays `actions` from the ground-truth start; rejects illegal moves.
    pub fn new(net: &RoadNetwork, truth: Trajectory, actions: Vec<Action>) -> Result<Self> {
        if actions.len() + 1 != truth.len() {
            return Err(Error::contract(format!(
                "experience needs {} actions for a length-{} trajectory, got {}",
                truth.len() - 1,
                truth.len(),
                actions.len()
            )));
        }
        let recon = Trajectory::replay(net, truth.first(), &actions)?.vertices().to_vec();
        Ok(Self { truth, actions, recon })
    }

    pub fn truth(&self) -> &Trajectory {
        &self.truth
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    /// `X̂`, starting at the ground-truth start.
    pub fn recon(&self) -> &[VertexId] {
        &self.recon
    }
}

/// Bounded FIFO of experiences.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    capacity: usize,
    items: VecDeque<Experience>,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        Self { capacity: capacity.max(1), items: VecDeque::with_capacity(capacity.min(1024)) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Appends, evicting the oldest experience when full.
    pub fn push(&mut self, exp: Experience) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(exp);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        self.items.iter()
    }

    /// `n` distinct experiences chosen uniformly.
    pub fn sample(&self, n: usize, rng: &mut Rng) -> Result<Vec<&Experience>> {
        if n > self.items.len() {
            return Err(Error::contract(format!("cannot sample {n} from {} experiences", self.items.len())));
        }
        Ok(index::sample(rng, self.items.len(), n).into_iter().map(|i| &self.items[i]).collect())
    }
}
