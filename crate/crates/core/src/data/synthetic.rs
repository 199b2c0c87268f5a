use crate::error::{Error, Result};
use crate::grid::{Cell, RoadNetwork, Trajectory, VertexId};
use crate::rng::{self, Rng};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

/// Inclusive rectangle of grid cells; blocked cells inside are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub rows: [usize; 2],
    pub cols: [usize; 2],
}

impl Region {
    pub const fn new(rows: [usize; 2], cols: [usize; 2]) -> Self {
        Self { rows, cols }
    }

    /// Free cells in row-major order.
    pub fn vertices(&self, net: &RoadNetwork) -> Vec<VertexId> {
        let mut out = Vec::new();
        for row in self.rows[0]..=self.rows[1] {
            for col in self.cols[0]..=self.cols[1] {
                if let Some(v) = net.vertex(Cell::new(row, col)) {
                    out.push(v);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub region: Region,
    /// Inclusive range of stay steps spent on arrival.
    #[serde(default)]
    pub dwell: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupTemplate {
    pub name: String,
    pub start: Region,
    pub waypoints: Vec<Waypoint>,
    /// Per-step probability of a one-cell detour and return.
    #[serde(default)]
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub groups: Vec<GroupTemplate>,
    pub per_group: usize,
    pub seed: u64,
}

fn waypoint(rows: [usize; 2], cols: [usize; 2], dwell: [usize; 2]) -> Waypoint {
    Waypoint { region: Region::new(rows, cols), dwell }
}

impl ScenarioSpec {
    /// Six groups on the 12x12 two-corridor ring: down the left corridor,
    /// down the right corridor and across the top hall then down the right,
    /// each in both directions. The reversed variants linger at their
    /// middle waypoint.
    pub fn default_ring(per_group: usize, seed: u64) -> Self {
        const TOP: [usize; 2] = [0, 2];
        const BOTTOM: [usize; 2] = [9, 11];
        const MIDDLE_ROWS: [usize; 2] = [4, 7];
        const MIDDLE_COLS: [usize; 2] = [4, 7];
        const LEFT: [usize; 2] = [0, 2];
        const RIGHT: [usize; 2] = [9, 11];
        let group = |name: &str, start: Region, waypoints: Vec<Waypoint>| GroupTemplate {
            name: name.to_string(),
            start,
            waypoints,
            noise: 0.05,
        };
        let groups = vec![
            group(
                "left-down",
                Region::new(TOP, MIDDLE_COLS),
                vec![waypoint(MIDDLE_ROWS, LEFT, [0, 1]), waypoint(BOTTOM, MIDDLE_COLS, [0, 0])],
            ),
            group(
                "left-up",
                Region::new(BOTTOM, MIDDLE_COLS),
                vec![waypoint(MIDDLE_ROWS, LEFT, [1, 3]), waypoint(TOP, MIDDLE_COLS, [0, 0])],
            ),
            group(
                "right-down",
                Region::new(TOP, MIDDLE_COLS),
                vec![waypoint(MIDDLE_ROWS, RIGHT, [0, 1]), waypoint(BOTTOM, MIDDLE_COLS, [0, 0])],
            ),
            group(
                "right-up",
                Region::new(BOTTOM, MIDDLE_COLS),
                vec![waypoint(MIDDLE_ROWS, RIGHT, [1, 3]), waypoint(TOP, MIDDLE_COLS, [0, 0])],
            ),
            group(
                "hall-then-right",
                Region::new(TOP, LEFT),
                vec![waypoint(TOP, RIGHT, [0, 1]), waypoint(BOTTOM, RIGHT, [0, 0])],
            ),
            group(
                "right-then-hall",
                Region::new(BOTTOM, RIGHT),
                vec![waypoint(TOP, RIGHT, [1, 3]), waypoint(TOP, LEFT, [0, 0])],
            ),
        ];
        Self { groups, per_group, seed }
    }

    /// Same routes with more noise, longer dwells and a different seed.
    pub fn perturbed(&self, seed: u64) -> Self {
        let groups = self
            .groups
            .iter()
            .map(|g| GroupTemplate {
                noise: (g.noise + 0.05).min(0.5),
                waypoints: g
                    .waypoints
                    .iter()
                    .map(|w| Waypoint { region: w.region, dwell: [w.dwell[0], w.dwell[1] + 1] })
                    .collect(),
                ..g.clone()
            })
            .collect();
        Self { groups, per_group: self.per_group, seed }
    }

    /// The perturbed held-out companion of this spec.
    pub fn held_out(&self) -> Self {
        self.perturbed(self.seed.wrapping_add(1000))
    }

    pub fn validate(&self, net: &RoadNetwork) -> Result<()> {
        if self.groups.is_empty() {
            return Err(Error::config("scenario has no groups"));
        }
        for g in &self.groups {
            if !(0.0..1.0).contains(&g.noise) {
                return Err(Error::config(format!("group `{}`: noise must lie in [0, 1), got {}", g.name, g.noise)));
            }
            if g.start.vertices(net).is_empty() {
                return Err(Error::config(format!("group `{}`: start region has no free cell", g.name)));
            }
            for (i, w) in g.waypoints.iter().enumerate() {
                if w.region.vertices(net).is_empty() {
                    return Err(Error::config(format!("group `{}`: waypoint {i} region has no free cell", g.name)));
                }
                if w.dwell[0] > w.dwell[1] {
                    return Err(Error::config(format!("group `{}`: waypoint {i} dwell range is inverted", g.name)));
                }
            }
        }
        Ok(())
    }
}

fn pick(cells: &[VertexId], rng: &mut Rng) -> VertexId {
    cells[rng.gen_range(0..cells.len())]
}

fn one_trajectory(net: &RoadNetwork, group: &GroupTemplate, rng: &mut Rng) -> Result<Vec<VertexId>> {
    let mut route = vec![pick(&group.start.vertices(net), rng)];
    for (i, w) in group.waypoints.iter().enumerate() {
        let goal = pick(&w.region.vertices(net), rng);
        let cur = *route.last().expect("non-empty route");
        let path = net.shortest_path(cur, goal).ok_or_else(|| {
            Error::data(format!(
                "scenario group `{}`: waypoint {i} at {} is unreachable from {}",
                group.name,
                net.cell(goal),
                net.cell(cur)
            ))
        })?;
        route.extend_from_slice(&path[1..]);
        let dwell = rng.gen_range(w.dwell[0]..=w.dwell[1]);
        route.extend(std::iter::repeat_n(goal, dwell));
    }
    if group.noise == 0.0 {
        return Ok(route);
    }
    let mut out = Vec::with_capacity(route.len() * 2);
    for (t, &v) in route.iter().enumerate() {
        out.push(v);
        if t + 1 < route.len() && rng.gen::<f64>() < group.noise {
            let detours: Vec<VertexId> = net.rcells(v).into_iter().filter(|&n| n != v && net.has_edge(n, v)).collect();
            if !detours.is_empty() {
                out.push(pick(&detours, rng));
                out.push(v);
            }
        }
    }
    Ok(out)
}

/// Labeled corpus: `per_group` trajectories for each group, labeled by group index.
pub fn generate_synthetic(net: &RoadNetwork, spec: &ScenarioSpec) -> Result<Vec<Trajectory>> {
    spec.validate(net)?;
    let mut out = Vec::with_capacity(spec.groups.len() * spec.per_group);
    for (g, group) in spec.groups.iter().enumerate() {
        for i in 0..spec.per_group {
            let seed = rng::derive_index(rng::derive_index(rng::derive(spec.seed, "synthetic"), g as u64), i as u64);
            let cells = one_trajectory(net, group, &mut rng::seeded(seed))?;
            out.push(Trajectory::new(net, cells, Some(g as u32))?);
        }
    }
    Ok(out)
}
