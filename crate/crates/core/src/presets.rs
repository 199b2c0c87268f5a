//! Built-in maps used by tests, examples, and the CLI `--preset` option.

use crate::grid::{parse_map, parse_walls, Cell, GridSpec, OccupancyMap, RoadNetwork, Trajectory, VertexId};
use crate::rng;
use rand::Rng as _;

/// Default cell size in meters.
pub const DEFAULT_ALPHA: f64 = 3.0;

/// Twelve-by-twelve ring: two vertical corridors joined by open halls at
/// the top and bottom, around a solid central block.
pub const TWO_CORRIDOR_12: &str = "\
............
............
............
...######...
...######...
...######...
...######...
...######...
...######...
............
............
............
";

pub const TWO_CORRIDOR_6: &str = "\
......
......
..##..
..##..
......
......
";

/// Single wall segment splitting part of the 6x6 ring's left corridor.
pub const TWO_CORRIDOR_6_WALLS: &str = "2,0-2,1\n";

pub const FIXTURE_8: &str = "\
........
........
..##....
..##....
........
.....##.
........
........
";

pub const FIXTURE_8_WALLS: &str = "6,0-6,1\n7,0-7,1\n7,0-6,1\n6,0-7,1\n";

/// Small floor plan used for documentation examples: a column obstacle at
/// (2,2), an out-of-building cell at (0,0), and a wall between columns 0
/// and 1 along rows 2-3.
pub const FIG2: &str = "\
#..
...
..#
...
";

pub const FIG2_WALLS: &str = "2,0-2,1\n2,0-3,1\n3,0-3,1\n3,0-2,1\n";

pub const FIG2_OBSTACLE: Cell = Cell::new(2, 2);

pub fn build(map_text: &str, walls: &str, alpha: f64) -> RoadNetwork {
    let mut map = parse_map(map_text).expect("preset map parses");
    parse_walls(walls, &mut map).expect("preset walls parse");
    let spec = GridSpec::new([0.0, 0.0], alpha, map.width, map.height).expect("preset spec");
    RoadNetwork::build(&map, spec).expect("preset network")
}

pub fn by_name(name: &str) -> Option<(&'static str, &'static str)> {
    match name {
        "two-corridor-12" => Some((TWO_CORRIDOR_12, "")),
        "two-corridor-6" => Some((TWO_CORRIDOR_6, TWO_CORRIDOR_6_WALLS)),
        "fixture-8" => Some((FIXTURE_8, FIXTURE_8_WALLS)),
        "fig2" => Some((FIG2, FIG2_WALLS)),
        _ => None,
    }
}

pub fn two_corridor_12x12() -> RoadNetwork {
    build(TWO_CORRIDOR_12, "", DEFAULT_ALPHA)
}

pub fn two_corridor_6x6() -> RoadNetwork {
    build(TWO_CORRIDOR_6, TWO_CORRIDOR_6_WALLS, DEFAULT_ALPHA)
}

pub fn fixture_8x8() -> RoadNetwork {
    build(FIXTURE_8, FIXTURE_8_WALLS, DEFAULT_ALPHA)
}

pub fn open_grid(width: usize, height: usize) -> RoadNetwork {
    let map = OccupancyMap::open(width, height);
    RoadNetwork::build(&map, GridSpec::new([0.0, 0.0], 1.0, width, height).expect("spec"))
        .expect("open grid")
}

/// The documentation floor plan with `v0..v9` numbered column-major over
/// free cells: column 0 holds v0-v2, column 1 holds v3-v6, column 2 holds
/// v7, v8, v9 (the obstacle at row 2 is skipped).
pub struct Fig2 {
    pub net: RoadNetwork,
    labels: Vec<VertexId>,
}

impl Fig2 {
    pub fn v(&self, i: usize) -> VertexId {
        self.labels[i]
    }
}

pub fn fig2() -> Fig2 {
    let net = build(FIG2, FIG2_WALLS, 1.0);
    let spec = *net.spec();
    let mut labels = Vec::new();
    for col in 0..spec.width {
        for row in 0..spec.height {
            if let Some(v) = net.vertex(Cell::new(row, col)) {
                labels.push(v);
            }
        }
    }
    Fig2 { net, labels }
}

/// `n` distinct shortest paths between seeded random endpoints whose hop
/// distance lies in `hops`; every trajectory has at most `hops.end() + 1` cells.
pub fn path_corpus(net: &RoadNetwork, n: usize, hops: std::ops::RangeInclusive<u32>, seed: u64) -> Vec<Trajectory> {
    let mut r = rng::stream(seed, "path-corpus");
    let mut out: Vec<Trajectory> = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n {
        attempts += 1;
        assert!(attempts < 100_000, "no {n} distinct paths with hop distance in {hops:?}");
        let (a, b) = (r.gen_range(0..net.len()), r.gen_range(0..net.len()));
        if !net.shortest_distance(a, b).is_some_and(|d| hops.contains(&d)) {
            continue;
        }
        let path = net.shortest_path(a, b).expect("connected");
        if out.iter().all(|t| t.vertices() != path.as_slice()) {
            out.push(Trajectory::new(net, path, None).expect("shortest paths are legal"));
        }
    }
    out
}
