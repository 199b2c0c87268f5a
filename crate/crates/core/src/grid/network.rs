use super::{Action, Cell, GridSpec, OccupancyMap, Trajectory};
use crate::error::{Error, Result};
use crate::rng;
use rand::seq::SliceRandom;
use sha2::{Digest, Sha256};
use std::collections::VecDeque;
use std::sync::OnceLock;

/// Dense index of a network vertex.
pub type VertexId = usize;

const ALL_PAIRS_LIMIT: usize = 4096;
const UNREACHED: u32 = u32::MAX;

/// Directed graph of traversable cells. Immutable after construction.
#[derive(Debug, Clone)]
pub struct RoadNetwork {
    spec: GridSpec,
    map: OccupancyMap,
    cells: Vec<Cell>,
    index: Vec<Option<VertexId>>,
    transitions: Vec<[Option<VertexId>; Action::COUNT]>,
    hash: String,
    dist: OnceLock<Vec<u32>>,
}

impl RoadNetwork {
    /// Builds the network. A transition `v -> v⊙a` exists when the target is
    /// in bounds and unblocked, no wall segment joins the pair, and for a
    /// diagonal move both flanking orthogonal cells are unblocked.
    pub fn build(map: &OccupancyMap, spec: GridSpec) -> Result<Self> {
        spec.validate()?;
        map.validate()?;
        if map.width != spec.width || map.height != spec.height {
            return Err(Error::config(format!(
                "map is {}x{} but grid spec is {}x{}",
                map.height, map.width, spec.height, spec.width
            )));
        }
        let mut index = vec![None; spec.cell_count()];
        let mut cells = Vec::new();
        for row in 0..spec.height {
            for col in 0..spec.width {
                let cell = Cell { row, col };
                if !map.is_blocked(cell) {
                    index[spec.linear(cell)] = Some(cells.len());
                    cells.push(cell);
                }
            }
        }
        if cells.is_empty() {
            return Err(Error::config("road network has no traversable cells"));
        }
        let free = |c: Option<Cell>| c.is_some_and(|c| !map.is_blocked(c));
        let transitions = cells
            .iter()
            .map(|&cell| {
                let mut row = [None; Action::COUNT];
                for action in Action::ALL {
                    let Some(next) = spec.step(cell, action) else { continue };
                    if map.is_blocked(next) || map.severed(cell, next) {
                        continue;
                    }
                    if action.is_diagonal() {
                        let (dr, dc) = action.offset();
                        let vertical = spec.step(cell, if dr < 0 { Action::N } else { Action::S });
                        let horizontal = spec.step(cell, if dc < 0 { Action::W } else { Action::E });
                        if !free(vertical) || !free(horizontal) {
                            continue;
                        }
                    }
                    row[action.index()] = index[spec.linear(next)];
                }
                row
            })
            .collect();
        let hash = map_hash(map, &spec);
        Ok(Self { spec, map: map.clone(), cells, index, transitions, hash, dist: OnceLock::new() })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn map(&self) -> &OccupancyMap {
        &self.map
    }

    /// Content hash of the map and grid spec; tags derived artifacts.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell(&self, v: VertexId) -> Cell {
        self.cells[v]
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn vertex(&self, cell: Cell) -> Option<VertexId> {
        if !self.spec.contains(cell) {
            return None;
        }
        self.index[self.spec.linear(cell)]
    }

    pub fn vertex_or_err(&self, cell: Cell) -> Result<VertexId> {
        self.vertex(cell)
            .ok_or_else(|| Error::Lookup(format!("cell {cell} is not a network vertex")))
    }

    /// Result of a legal action, `None` if the action is masked out.
    pub fn transition(&self, v: VertexId, action: Action) -> Option<VertexId> {
        self.transitions[v][action.index()]
    }

    /// Reachable cells in canonical action order (always includes `v`).
    pub fn rcells(&self, v: VertexId) -> Vec<VertexId> {
        self.transitions[v].iter().flatten().copied().collect()
    }

    pub fn legal_actions(&self, v: VertexId) -> Vec<Action> {
        Action::ALL
            .into_iter()
            .filter(|a| self.transitions[v][a.index()].is_some())
            .collect()
    }

    pub fn mask(&self, v: VertexId) -> [bool; Action::COUNT] {
        self.transitions[v].map(|t| t.is_some())
    }

    pub fn mask_f64(&self, v: VertexId) -> [f64; Action::COUNT] {
        self.transitions[v].map(|t| if t.is_some() { 1.0 } else { 0.0 })
    }

    pub fn has_edge(&self, u: VertexId, v: VertexId) -> bool {
        self.transitions[u].contains(&Some(v))
    }

    /// The unique action taking `u` to `v`, if the edge exists.
    pub fn action_between(&self, u: VertexId, v: VertexId) -> Option<Action> {
        Action::ALL
            .into_iter()
            .find(|a| self.transitions[u][a.index()] == Some(v))
    }

    pub fn edge_count(&self) -> usize {
        self.transitions.iter().map(|t| t.iter().flatten().count()).sum()
    }

    fn bfs(&self, source: VertexId) -> (Vec<u32>, Vec<Option<VertexId>>) {
        let n = self.len();
        let mut dist = vec![UNREACHED; n];
        let mut parent = vec![None; n];
        let mut queue = VecDeque::new();
        dist[source] = 0;
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            for &next in self.transitions[u].iter().flatten() {
                if dist[next] == UNREACHED {
                    dist[next] = dist[u] + 1;
                    parent[next] = Some(u);
                    queue.push_back(next);
                }
            }
        }
        (dist, parent)
    }

    fn all_pairs(&self) -> Option<&[u32]> {
        if self.len() > ALL_PAIRS_LIMIT {
            return None;
        }
        let table = self.dist.get_or_init(|| {
            let mut table = Vec::with_capacity(self.len() * self.len());
            for v in 0..self.len() {
                table.extend(self.bfs(v).0);
            }
            table
        });
        Some(table)
    }

    /// Minimum hop count on a directed path `u -> v`; `None` if unreachable.
    pub fn shortest_distance(&self, u: VertexId, v: VertexId) -> Option<u32> {
        let d = match self.all_pairs() {
            Some(table) => table[u * self.len() + v],
            None => self.bfs(u).0[v],
        };
        (d != UNREACHED).then_some(d)
    }

    /// Distance that must exist; unreachable pairs are a data error.
    pub fn distance(&self, u: VertexId, v: VertexId) -> Result<u32> {
        self.shortest_distance(u, v).ok_or_else(|| {
            Error::data(format!("{} is unreachable from {}", self.cells[v], self.cells[u]))
        })
    }

    /// A shortest vertex path from `u` to `v` inclusive. Ties resolve by
    /// canonical action order, so the path is deterministic.
    pub fn shortest_path(&self, u: VertexId, v: VertexId) -> Option<Vec<VertexId>> {
        let (dist, parent) = self.bfs(u);
        if dist[v] == UNREACHED {
            return None;
        }
        let mut path = vec![v];
        let mut cur = v;
        while let Some(p) = parent[cur] {
            path.push(p);
            cur = p;
        }
        path.reverse();
        Some(path)
    }

    /// Uniform random walk: each step picks one legal action uniformly.
    pub fn random_walk(&self, start: VertexId, length: usize, seed: u64) -> Result<Trajectory> {
        let mut rng = rng::seeded(seed);
        self.random_walk_with(start, length, &mut rng)
    }

    pub fn random_walk_with(&self, start: VertexId, length: usize, rng: &mut rng::Rng) -> Result<Trajectory> {
        if start >= self.len() {
            return Err(Error::Lookup(format!("vertex {start} out of range")));
        }
        if length == 0 {
            return Err(Error::contract("walk length must be at least 1"));
        }
        let mut cells = Vec::with_capacity(length);
        cells.push(start);
        let mut cur = start;
        for _ in 1..length {
            let options: Vec<VertexId> = self.transitions[cur].iter().flatten().copied().collect();
            cur = *options.choose(rng).expect("stay is always legal");
            cells.push(cur);
        }
        Ok(Trajectory::from_vertices_unchecked(cells, None))
    }
}

fn map_hash(map: &OccupancyMap, spec: &GridSpec) -> String {
    let mut hasher = Sha256::new();
    hasher.update(format!(
        "grid {} {} {:?} {:?} {:?}\n",
        spec.width,
        spec.height,
        spec.origin[0].to_bits(),
        spec.origin[1].to_bits(),
        spec.cell_size.to_bits()
    ));
    hasher.update(super::render_map(map));
    hasher.update(super::render_walls(map));
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
