//! Grid abstraction and the pedestrian road network.
//!
//! Layout convention: rows grow southward (increasing y), columns grow
//! eastward (increasing x). `N` decreases the row, `E` increases the column.

mod mapfile;
mod network;
mod trajectory;

pub use mapfile::{parse_map, parse_walls, render_map, render_walls};
pub use network::{RoadNetwork, VertexId};
pub use trajectory::Trajectory;

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

/// One square of the grid overlay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    /// Chebyshev adjacency (8-neighbourhood), excluding the cell itself.
    pub fn is_neighbor(&self, other: &Cell) -> bool {
        let dr = self.row.abs_diff(other.row);
        let dc = self.col.abs_diff(other.col);
        dr <= 1 && dc <= 1 && (dr, dc) != (0, 0)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.row, self.col)
    }
}

impl std::str::FromStr for Cell {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (r, c) = s
            .trim()
            .split_once(':')
            .ok_or_else(|| Error::data(format!("bad cell `{s}`, expected row:col")))?;
        let row = r.parse().map_err(|_| Error::data(format!("bad row in cell `{s}`")))?;
        let col = c.parse().map_err(|_| Error::data(format!("bad column in cell `{s}`")))?;
        Ok(Cell { row, col })
    }
}

/// Movement actions in their canonical index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Action {
    N,
    NE,
    E,
    SE,
    S,
    SW,
    W,
    NW,
    Stay,
}

impl Action {
    pub const COUNT: usize = 9;

    pub const ALL: [Action; 9] = [
        Action::N,
        Action::NE,
        Action::E,
        Action::SE,
        Action::S,
        Action::SW,
        Action::W,
        Action::NW,
        Action::Stay,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    /// (row delta, column delta).
    pub fn offset(self) -> (isize, isize) {
        match self {
            Action::N => (-1, 0),
            Action::NE => (-1, 1),
            Action::E => (0, 1),
            Action::SE => (1, 1),
            Action::S => (1, 0),
            Action::SW => (1, -1),
            Action::W => (0, -1),
            Action::NW => (-1, -1),
            Action::Stay => (0, 0),
        }
    }

    pub fn is_diagonal(self) -> bool {
        let (dr, dc) = self.offset();
        dr != 0 && dc != 0
    }

    pub fn label(self) -> &'static str {
        match self {
            Action::N => "N",
            Action::NE => "NE",
            Action::E => "E",
            Action::SE => "SE",
            Action::S => "S",
            Action::SW => "SW",
            Action::W => "W",
            Action::NW => "NW",
            Action::Stay => "STAY",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Square grid overlay of side `cell_size` (meters) anchored at `origin`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: [f64; 2],
    pub cell_size: f64,
    pub width: usize,
    pub height: usize,
}

impl GridSpec {
    pub fn new(origin: [f64; 2], cell_size: f64, width: usize, height: usize) -> Result<Self> {
        let spec = Self { origin, cell_size, width, height };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cell_size.is_finite() && self.cell_size > 0.0) {
            return Err(Error::config(format!("cell size must be positive, got {}", self.cell_size)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::config("grid must have at least one cell"));
        }
        if !self.origin.iter().all(|v| v.is_finite()) {
            return Err(Error::config("grid origin must be finite"));
        }
        Ok(())
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.row < self.height && cell.col < self.width
    }

    pub fn cell_count(&self) -> usize {
        self.width * self.height
    }

    /// Row-major linear index of an in-bounds cell.
    pub fn linear(&self, cell: Cell) -> usize {
        cell.row * self.width + cell.col
    }

    /// Maps a coordinate to its enclosing cell.
    ///
    /// Cells cover `(k·α, (k+1)·α]` along each axis so a point on a shared
    /// edge belongs to the lower-index cell; the grid's own lower boundary
    /// belongs to index 0.
    pub fn discretize(&self, point: [f64; 2]) -> Result<Cell> {
        let axis = |value: f64, origin: f64, count: usize, name: &str| -> Result<usize> {
            let u = (value - origin) / self.cell_size;
            if !u.is_finite() || u < 0.0 || u > count as f64 {
                return Err(Error::Range(format!(
                    "{name} coordinate {value} outside grid extent [{origin}, {}]",
                    origin + count as f64 * self.cell_size
                )));
            }
            Ok((u.ceil() as usize).saturating_sub(1).min(count - 1))
        };
        let col = axis(point[0], self.origin[0], self.width, "x")?;
        let row = axis(point[1], self.origin[1], self.height, "y")?;
        Ok(Cell { row, col })
    }

    /// Coordinate of a cell's center.
    pub fn center(&self, cell: Cell) -> [f64; 2] {
        [
            self.origin[0] + (cell.col as f64 + 0.5) * self.cell_size,
            self.origin[1] + (cell.row as f64 + 0.5) * self.cell_size,
        ]
    }

    /// The movement operator: geometric neighbour in direction `action`,
    /// ignoring obstacles. `None` at the grid boundary.
    pub fn step(&self, cell: Cell, action: Action) -> Option<Cell> {
        let (dr, dc) = action.offset();
        let row = cell.row.checked_add_signed(dr)?;
        let col = cell.col.checked_add_signed(dc)?;
        let next = Cell { row, col };
        self.contains(next).then_some(next)
    }
}

/// Obstacles and wall segments over a grid.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OccupancyMap {
    pub width: usize,
    pub height: usize,
    pub blocked: BTreeSet<Cell>,
    /// Ordered pairs whose direct transition is forbidden (in both directions).
    pub walls: BTreeSet<(Cell, Cell)>,
}

impl OccupancyMap {
    pub fn open(width: usize, height: usize) -> Self {
        Self { width, height, ..Default::default() }
    }

    pub fn block(&mut self, cell: Cell) -> &mut Self {
        self.blocked.insert(cell);
        self
    }

    pub fn wall(&mut self, a: Cell, b: Cell) -> &mut Self {
        self.walls.insert((a, b));
        self
    }

    pub fn is_blocked(&self, cell: Cell) -> bool {
        self.blocked.contains(&cell)
    }

    pub fn severed(&self, a: Cell, b: Cell) -> bool {
        self.walls.contains(&(a, b)) || self.walls.contains(&(b, a))
    }

    pub fn validate(&self) -> Result<()> {
        let inside = |c: &Cell| c.row < self.height && c.col < self.width;
        if let Some(c) = self.blocked.iter().find(|c| !inside(c)) {
            return Err(Error::config(format!("blocked cell {c} outside {}x{} grid", self.height, self.width)));
        }
        if let Some((a, b)) = self.walls.iter().find(|(a, b)| !inside(a) || !inside(b)) {
            return Err(Error::config(format!("wall segment {a}-{b} outside {}x{} grid", self.height, self.width)));
        }
        Ok(())
    }
}
