//! Cell embeddings learned from the road network.
//!
//! Uniform random walks (no return/in-out bias) feed a skip-gram model
//! trained with negative sampling. The resulting table is frozen input for
//! the actor and critic.

use crate::error::{Error, Result};
use crate::grid::{RoadNetwork, VertexId};
use crate::rng;
use crate::tensor::Tensor;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::path::Path;

const FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedConfig {
    pub dim: usize,
    pub walks_per_cell: usize,
    pub walk_length: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Set by the caller; not part of the serialized settings.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            walks_per_cell: 10,
            walk_length: 40,
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    map_hash: String,
    rows: Vec<Tensor>,
}

#[derive(Serialize, Deserialize)]
struct EmbeddingFile {
    version: u32,
    dim: usize,
    map_hash: String,
    vectors: Vec<Vec<f64>>,
}

impl EmbeddingTable {
    pub fn from_rows(map_hash: &str, rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if dim == 0 {
            return Err(Error::data("embedding table has no vectors"));
        }
        let rows = rows
            .into_iter()
            .map(|r| {
                if r.len() != dim {
                    return Err(Error::data("embedding rows differ in dimension"));
                }
                Ok(Tensor::vector(r)?)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { dim, map_hash: map_hash.to_string(), rows })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn map_hash(&self) -> &str {
        &self.map_hash
    }

    /// Stored vector for `cell`. Never trains.
    pub fn embed(&self, cell: VertexId) -> Result<&[f64]> {
        self.row(cell).map(Tensor::data)
    }

    pub fn row(&self, cell: VertexId) -> Result<&Tensor> {
        self.rows
            .get(cell)
            .ok_or_else(|| Error::Lookup(format!("no embedding for vertex {cell}")))
    }

    /// Rejects a table trained on a different map.
    pub fn check_network(&self, net: &RoadNetwork) -> Result<()> {
        if self.map_hash != net.hash() {
            return Err(Error::data(format!(
                "embedding table was built for map {} but network is {}",
                short(&self.map_hash),
                short(net.hash())
            )));
        }
        if self.rows.len() != net.len() {
            return Err(Error::data(format!("embedding table has {} rows for {} vertices", self.rows.len(), net.len())));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = EmbeddingFile {
            version: FILE_VERSION,
            dim: self.dim,
            map_hash: self.map_hash.clone(),
            vectors: self.rows.iter().map(|r| r.data().to_vec()).collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: EmbeddingFile = serde_json::from_str(text)?;
        if file.version != FILE_VERSION {
            return Err(Error::data(format!("unsupported embedding file version {}", file.version)));
        }
        let table = Self::from_rows(&file.map_hash, file.vectors)?;
        if table.dim != file.dim {
            return Err(Error::data("embedding dimension header disagrees with vectors"));
        }
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path, net: &RoadNetwork) -> Result<Self> {
        let table = Self::from_json(&std::fs::read_to_string(path)?)?;
        table.check_network(net)?;
        Ok(table)
    }
}

fn short(hash: &str) -> &str {
    &hash[..hash.len().min(12)]
}

/// Uniform walk over non-self-loop edges starting at `start`.
fn walk(net: &RoadNetwork, start: VertexId, length: usize, rng: &mut rng::Rng) -> Vec<VertexId> {
    let mut out = Vec::with_capacity(length);
    out.push(start);
    let mut cur = start;
    for _ in 1..length {
        let options: Vec<VertexId> = net.rcells(cur).into_iter().filter(|&v| v != cur).collect();
        match options.choose(rng) {
            Some(&next) => {
                out.push(next);
                cur = next;
            }
            None => break,
        }
    }
    out
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Skip-gram with negative sampling over uniform random walks.
pub fn train_embeddings(net: &RoadNetwork, config: &EmbedConfig) -> Result<EmbeddingTable> {
    if net.is_empty() {
        return Err(Error::config("cannot embed an empty network"));
    }
    if config.dim == 0 || config.walk_length == 0 {
        return Err(Error::config("embedding dim and walk length must be positive"));
    }
    let n = net.len();
    let dim = config.dim;

    let mut walks = Vec::with_capacity(n * config.walks_per_cell);
    for round in 0..config.walks_per_cell {
        for start in 0..n {
            let seed = rng::derive_index(rng::derive(config.seed, "embed-walk"), (round * n + start) as u64);
            walks.push(walk(net, start, config.walk_length, &mut rng::seeded(seed)));
        }
    }

    // Unigram^0.75 noise distribution.
    let mut counts = vec![0usize; n];
    walks.iter().flatten().for_each(|&v| counts[v] += 1);
    let mut cumulative = Vec::with_capacity(n);
    let mut total = 0.0;
    for &c in &counts {
        total += (c as f64).powf(0.75);
        cumulative.push(total);
    }

    let mut rng = rng::stream(config.seed, "embed-sgd");
    let scale = 0.5 / dim as f64;
    let mut input: Vec<f64> = (0..n * dim).map(|_| rng.gen_range(-scale..scale)).collect();
    let mut output = vec![0.0; n * dim];

    let pairs_per_epoch: usize = walks
        .iter()
        .map(|w| (0..w.len()).map(|i| i.min(config.window) + (w.len() - 1 - i).min(config.window)).sum::<usize>())
        .sum();
    let total_steps = (pairs_per_epoch * config.epochs).max(1) as f64;
    let mut step = 0usize;
    let mut err = vec![0.0; dim];

    for _ in 0..config.epochs {
        for w in &walks {
            for (i, &center) in w.iter().enumerate() {
                let lo = i.saturating_sub(config.window);
                let hi = (i + config.window).min(w.len() - 1);
                for (j, &context) in w.iter().enumerate().take(hi + 1).skip(lo) {
                    if j == i {
                        continue;
                    }
                    let lr = config.learning_rate * (1.0 - step as f64 / total_steps).max(1e-4);
                    step += 1;
                    err.fill(0.0);
                    let u = center * dim;
                    for k in 0..=config.negatives {
                        let (target, label) = if k == 0 {
                            (context, 1.0)
                        } else {
                            let x = rng.gen_range(0.0..total);
                            let t = cumulative.partition_point(|&c| c <= x).min(n - 1);
                            if t == context {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let o = target * dim;
                        let score: f64 = (0..dim).map(|d| input[u + d] * output[o + d]).sum();
                        let g = (label - sigmoid(score)) * lr;
                        for d in 0..dim {
                            err[d] += g * output[o + d];
                            output[o + d] += g * input[u + d];
                        }
                    }
                    for d in 0..dim {
                        input[u + d] += err[d];
                    }
                }
            }
        }
    }

    let rows = input.chunks_exact(dim).map(<[f64]>::to_vec).collect();
    EmbeddingTable::from_rows(net.hash(), rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn quick() -> EmbedConfig {
        EmbedConfig { walks_per_cell: 4, walk_length: 20, epochs: 2, ..EmbedConfig::default() }
    }

    #[test]
    fn single_vertex_network() {
        let net = presets::open_grid(1, 1);
        let table = train_embeddings(&net, &quick()).unwrap();
        assert_eq!(table.len(), 1);
        assert!(table.embed(0).unwrap().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn deterministic_given_seed() {
        let net = presets::two_corridor_6x6();
        let a = train_embeddings(&net, &quick()).unwrap();
        let b = train_embeddings(&net, &quick()).unwrap();
        assert_eq!(a, b);
        let c = train_embeddings(&net, &EmbedConfig { seed: 1, ..quick() }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn lookup_is_pure_and_sized() {
        let net = presets::two_corridor_6x6();
        let table = train_embeddings(&net, &quick()).unwrap();
        assert_eq!(table.embed(3).unwrap(), table.embed(3).unwrap());
        assert_eq!(table.embed(3).unwrap().len(), 32);
        assert!(matches!(table.embed(net.len()), Err(Error::Lookup(_))));
    }

    #[test]
    fn json_round_trip_and_stale_rejection() {
        let net = presets::two_corridor_6x6();
        let table = train_embeddings(&net, &quick()).unwrap();
        let back = EmbeddingTable::from_json(&table.to_json().unwrap()).unwrap();
        assert_eq!(back, table);
        assert!(back.check_network(&net).is_ok());
        let other = presets::open_grid(6, 6);
        assert!(back.check_network(&other).is_err());
    }
}
