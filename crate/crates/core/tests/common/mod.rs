#![allow(dead_code)]

pub mod gradcheck;

use rand::Rng as _;
use trep_core::actor::{Actor, DecoderState};
use trep_core::critic::reward;
use trep_core::embed::{train_embeddings, EmbedConfig};
use trep_core::rng::seeded;
use trep_core::tensor::ParameterStore;
use trep_core::{presets, Action, Cell, Env, GridSpec, OccupancyMap, RoadNetwork, VertexId};

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-3;

pub fn env_for(net: RoadNetwork, dim: usize, seed: u64) -> Env {
    let cfg = EmbedConfig { dim, walks_per_cell: 2, walk_length: 12, epochs: 1, seed, ..EmbedConfig::default() };
    let emb = train_embeddings(&net, &cfg).unwrap();
    Env::new(net, emb).unwrap()
}

pub fn small_env() -> Env {
    env_for(presets::two_corridor_6x6(), 4, 7)
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Worst relative error between the gradients accumulated in `analytic`
/// and central differences of `f`, over at most `per_param` evenly spaced
/// entries of every parameter.
pub fn finite_difference_error(analytic: &ParameterStore, per_param: usize, f: impl Fn(&ParameterStore) -> f64) -> (f64, String) {
    let store = analytic;
    let mut worst = (0.0, String::new());
    for name in store.names() {
        let n = store.get(name).unwrap().len();
        let stride = n.div_ceil(per_param).max(1);
        for i in (0..n).step_by(stride) {
            let mut probe = store.clone();
            let x = probe.get(name).unwrap().data()[i];
            probe.value_mut(name).unwrap().data_mut()[i] = x + FD_STEP;
            let up = f(&probe);
            probe.value_mut(name).unwrap().data_mut()[i] = x - FD_STEP;
            let down = f(&probe);
            let numeric = (up - down) / (2.0 * FD_STEP);
            let err = relative_error(analytic.grad(name).unwrap()[i], numeric);
            if err > worst.0 {
                worst = (err, format!("{name}[{i}]: analytic {} numeric {numeric}", analytic.grad(name).unwrap()[i]));
            }
        }
    }
    worst
}

/// Random map of at most 8×8 with blocked cells and wall segments; `None`
/// when every cell came out blocked.
pub fn random_network(seed: u64) -> Option<RoadNetwork> {
    let mut rng = seeded(seed);
    let (w, h) = (rng.gen_range(1..=8), rng.gen_range(1..=8));
    let mut map = OccupancyMap::open(w, h);
    let density = rng.gen_range(0.0..0.35);
    for row in 0..h {
        for col in 0..w {
            if rng.gen_bool(density) {
                map.block(Cell::new(row, col));
            }
        }
    }
    for _ in 0..rng.gen_range(0..=w * h / 3) {
        let a = Cell::new(rng.gen_range(0..h), rng.gen_range(0..w));
        let b = Cell::new((a.row + rng.gen_range(0..=1)).min(h - 1), (a.col + rng.gen_range(0..=1)).min(w - 1));
        if a != b {
            map.wall(a, b);
        }
    }
    RoadNetwork::build(&map, GridSpec::new([0.0, 0.0], 1.0, w, h).unwrap()).ok()
}

/// Legal moves recomputed from the occupancy map alone: 8-neighbours plus
/// the cell itself, unblocked, not walled off, and no corner cutting.
pub fn edge_oracle(net: &RoadNetwork) -> Vec<Vec<bool>> {
    let map = net.map();
    let free = |r: isize, c: isize| {
        r >= 0 && c >= 0 && (r as usize) < map.height && (c as usize) < map.width && !map.is_blocked(Cell::new(r as usize, c as usize))
    };
    let n = net.len();
    let mut adj = vec![vec![false; n]; n];
    for u in 0..n {
        let a = net.cell(u);
        let (ar, ac) = (a.row as isize, a.col as isize);
        for v in 0..n {
            let b = net.cell(v);
            let (dr, dc) = (b.row as isize - ar, b.col as isize - ac);
            if dr.abs() > 1 || dc.abs() > 1 || map.severed(a, b) {
                continue;
            }
            let diagonal = dr != 0 && dc != 0;
            adj[u][v] = !diagonal || (free(ar + dr, ac) && free(ar, ac + dc));
        }
    }
    adj
}

pub fn floyd_warshall(adj: &[Vec<bool>]) -> Vec<Vec<Option<u32>>> {
    let n = adj.len();
    let mut d: Vec<Vec<Option<u32>>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { Some(0) } else if adj[i][j] { Some(1) } else { None }).collect())
        .collect();
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if let (Some(a), Some(b)) = (d[i][k], d[k][j]) {
                    if d[i][j].is_none_or(|c| a + b < c) {
                        d[i][j] = Some(a + b);
                    }
                }
            }
        }
    }
    d
}

/// Exact expected future reward after `prefix` under the actor's policy,
/// summing over every action sequence weighted by its probability.
pub fn enumerate_value(actor: &Actor, env: &Env, c: &[f64], truth: &[VertexId], prefix: &[VertexId], delta: u32) -> f64 {
    let mut state = actor.initial_state();
    let mut policy = [0.0; Action::COUNT];
    for &cell in prefix {
        (state, policy) = actor.decode_step(env, &state, cell, c).unwrap();
    }
    expand(actor, env, c, truth, *prefix.last().unwrap(), prefix.len(), &state, &policy, delta)
}

#[allow(clippy::too_many_arguments)]
fn expand(
    actor: &Actor,
    env: &Env,
    c: &[f64],
    truth: &[VertexId],
    cur: VertexId,
    len: usize,
    state: &DecoderState,
    policy: &[f64; Action::COUNT],
    delta: u32,
) -> f64 {
    if len == truth.len() {
        return 0.0;
    }
    let mut total = 0.0;
    for (a, &p) in policy.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let next = env.net.transition(cur, Action::ALL[a]).expect("policy supported on legal moves");
        let r = f64::from(reward(&env.net, truth[len], next, delta));
        let rest = if len + 1 < truth.len() {
            let (s, pol) = actor.decode_step(env, state, next, c).unwrap();
            expand(actor, env, c, truth, next, len + 1, &s, &pol, delta)
        } else {
            0.0
        };
        total += p * (r + rest);
    }
    total
}
