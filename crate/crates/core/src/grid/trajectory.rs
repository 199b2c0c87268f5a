use super::{Action, Cell, RoadNetwork, VertexId};
use crate::error::{Error, Result};
use std::ops::RangeInclusive;

/// Ordered sequence of network vertices joined by legal transitions.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Trajectory {
    cells: Vec<VertexId>,
    label: Option<u32>,
}

impl Trajectory {
    pub fn new(net: &RoadNetwork, cells: Vec<VertexId>, label: Option<u32>) -> Result<Self> {
        let traj = Self { cells, label };
        traj.validate(net)?;
        Ok(traj)
    }

    pub(crate) fn from_vertices_unchecked(cells: Vec<VertexId>, label: Option<u32>) -> Self {
        Self { cells, label }
    }

    pub fn from_cells(net: &RoadNetwork, cells: &[Cell], label: Option<u32>) -> Result<Self> {
        let vertices = cells
            .iter()
            .map(|&c| net.vertex_or_err(c))
            .collect::<Result<Vec<_>>>()?;
        Self::new(net, vertices, label)
    }

    /// Rebuilds a trajectory by applying `actions` from `start`.
    pub fn replay(net: &RoadNetwork, start: VertexId, actions: &[Action]) -> Result<Self> {
        let mut cells = Vec::with_capacity(actions.len() + 1);
        cells.push(start);
        let mut cur = start;
        for (t, &a) in actions.iter().enumerate() {
            cur = net.transition(cur, a).ok_or_else(|| {
                Error::contract(format!("action {a} at step {t} is illegal at {}", net.cell(cur)))
            })?;
            cells.push(cur);
        }
        Ok(Self { cells, label: None })
    }

    pub fn validate(&self, net: &RoadNetwork) -> Result<()> {
        if self.cells.is_empty() {
            return Err(Error::data("trajectory is empty"));
        }
        if let Some(&v) = self.cells.iter().find(|&&v| v >= net.len()) {
            return Err(Error::data(format!("vertex {v} is not in the network")));
        }
        for (t, w) in self.cells.windows(2).enumerate() {
            if !net.has_edge(w[0], w[1]) {
                return Err(Error::data(format!(
                    "illegal transition {} -> {} at step {t}",
                    net.cell(w[0]),
                    net.cell(w[1])
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn vertices(&self) -> &[VertexId] {
        &self.cells
    }

    pub fn first(&self) -> VertexId {
        self.cells[0]
    }

    pub fn label(&self) -> Option<u32> {
        self.label
    }

    pub fn with_label(mut self, label: Option<u32>) -> Self {
        self.label = label;
        self
    }

    /// Sub-trajectory over an inclusive index range (0-based).
    pub fn slice(&self, range: RangeInclusive<usize>) -> Result<Self> {
        let (s, e) = (*range.start(), *range.end());
        if s > e || e >= self.cells.len() {
            return Err(Error::contract(format!("slice {s}..={e} out of range for length {}", self.len())));
        }
        Ok(Self { cells: self.cells[s..=e].to_vec(), label: self.label })
    }

    /// The unique action sequence with `x_t ⊙ y_t = x_{t+1}`.
    pub fn actions(&self, net: &RoadNetwork) -> Result<Vec<Action>> {
        self.cells
            .windows(2)
            .enumerate()
            .map(|(t, w)| {
                net.action_between(w[0], w[1]).ok_or_else(|| {
                    Error::data(format!(
                        "no action joins {} -> {} at step {t}",
                        net.cell(w[0]),
                        net.cell(w[1])
                    ))
                })
            })
            .collect()
    }

    pub fn grid_cells(&self, net: &RoadNetwork) -> Vec<Cell> {
        self.cells.iter().map(|&v| net.cell(v)).collect()
    }

    /// Converts timestamped coordinates to a trajectory. Repeated cells
    /// become stays; gaps are bridged with a shortest legal path.
    pub fn from_raw(samples: &[(f64, [f64; 2])], net: &RoadNetwork) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::data("no samples"));
        }
        let mut cells: Vec<VertexId> = Vec::with_capacity(samples.len());
        let mut last_time = f64::NEG_INFINITY;
        for (row, &(time, point)) in samples.iter().enumerate() {
            if time.partial_cmp(&last_time) != Some(std::cmp::Ordering::Greater) {
                return Err(Error::data(format!("sample {row}: timestamps must strictly increase")));
            }
            last_time = time;
            let cell = net
                .spec()
                .discretize(point)
                .map_err(|e| Error::data(format!("sample {row}: {e}")))?;
            let v = net
                .vertex(cell)
                .ok_or_else(|| Error::data(format!("sample {row}: cell {cell} is blocked")))?;
            match cells.last() {
                Some(&prev) if !net.has_edge(prev, v) => {
                    let bridge = net.shortest_path(prev, v).ok_or_else(|| {
                        Error::data(format!("sample {row}: {cell} unreachable from {}", net.cell(prev)))
                    })?;
                    cells.extend_from_slice(&bridge[1..]);
                }
                _ => cells.push(v),
            }
        }
        Ok(Self { cells, label: None })
    }
}
