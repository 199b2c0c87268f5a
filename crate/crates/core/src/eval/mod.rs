//! Clustering quality, baselines and the recoverability experiment.

mod cluster;
mod curves;
mod dft;

pub use cluster::{adjusted_rand_index, kmeans, ClusterAssignment, KMeansOptions};
pub use curves::{curves_svg, merge_curves, parse_representations, representations_csv, Curve};
pub use dft::{dft_features, dft_representation};

use crate::actor::{Actor, ActorConfig, OutputHead};
use crate::error::{Error, Result};
use crate::grid::{Action, RoadNetwork, Trajectory};
use crate::trainer::{pretrain_actor, PretrainOptions, TrainConfig};
use crate::Env;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Offset-minimized step distance: the shorter trajectory slides along the
/// longer one and the best alignment's summed hop distance is returned.
pub fn trajectory_error(net: &RoadNetwork, a: &Trajectory, b: &Trajectory) -> Result<u64> {
    let (short, long) = if a.len() <= b.len() { (a.vertices(), b.vertices()) } else { (b.vertices(), a.vertices()) };
    let mut best = u64::MAX;
    for delta in 0..=long.len() - short.len() {
        let mut sum = 0u64;
        for (t, &x) in short.iter().enumerate() {
            let d = net
                .shortest_distance(x, long[t + delta])
                .ok_or_else(|| Error::Range(format!("vertices {x} and {} are not connected", long[t + delta])))?;
            sum += u64::from(d);
            if sum >= best {
                break;
            }
        }
        best = best.min(sum);
    }
    Ok(best)
}

/// Within-cluster sum of errors between each trajectory and its cluster's medoid.
pub fn wcse(net: &RoadNetwork, assignment: &ClusterAssignment, trajectories: &[Trajectory]) -> Result<u64> {
    if assignment.labels.len() != trajectories.len() {
        return Err(Error::contract(format!(
            "assignment covers {} trajectories, corpus has {}",
            assignment.labels.len(),
            trajectories.len()
        )));
    }
    let mut total = 0;
    for (t, &label) in trajectories.iter().zip(&assignment.labels) {
        total += trajectory_error(net, t, &trajectories[assignment.medoids[label]])?;
    }
    Ok(total)
}

/// Clusters `reps` and scores the clustering in trajectory space.
pub fn wcse_at(net: &RoadNetwork, reps: &[Vec<f64>], trajectories: &[Trajectory], k: usize, seed: u64, opts: KMeansOptions) -> Result<u64> {
    let assignment = kmeans(reps, k, seed, opts)?;
    wcse(net, &assignment, trajectories)
}

pub fn encode_all(actor: &Actor, env: &Env, trajectories: &[Trajectory]) -> Result<Vec<Vec<f64>>> {
    trajectories.iter().map(|t| actor.encode(env, t)).collect()
}

pub fn dft_all(net: &RoadNetwork, trajectories: &[Trajectory], dim: usize) -> Result<Vec<Vec<f64>>> {
    trajectories.iter().map(|t| dft_representation(net, t, dim)).collect()
}

/// Next-location model: the actor's encoder-decoder shell with one output
/// logit per cell, trained by likelihood only.
pub fn train_cssrnn(env: &Env, corpus: &[Trajectory], config: &TrainConfig) -> Result<Actor> {
    let actor_config = ActorConfig { head: OutputHead::Cells, ..config.actor_config() };
    let mut actor = Actor::new(env, actor_config, config.component_seed("cssrnn-init"))?;
    let opts = PretrainOptions { seed: config.component_seed("cssrnn-pretrain"), ..PretrainOptions::from_config(config) };
    pretrain_actor(&mut actor, env, corpus, &opts)?;
    Ok(actor)
}

/// The actor trained by likelihood only.
pub fn train_trep_ll(env: &Env, corpus: &[Trajectory], config: &TrainConfig) -> Result<Actor> {
    let mut actor = Actor::new(env, config.actor_config(), config.component_seed("actor-init"))?;
    pretrain_actor(&mut actor, env, corpus, &PretrainOptions::from_config(config))?;
    Ok(actor)
}

/// Outcome of one forced deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recovery {
    /// 0-based action index that was overridden.
    pub step: usize,
    pub forced: Action,
    /// Steps after the forced one until the reconstruction is back within
    /// `delta` of the truth; `None` if it never is.
    pub horizon: Option<usize>,
    pub cells: Vec<usize>,
}

/// Replays the ground-truth actions before `step`, forces `action` at
/// `step`, decodes greedily afterwards and measures how long the
/// reconstruction stays off the ground-truth tube.
pub fn rejoin_horizon(actor: &Actor, env: &Env, truth: &Trajectory, step: usize, action: Action, delta: u32) -> Result<Recovery> {
    if step + 1 >= truth.len() {
        return Err(Error::contract(format!("step {step} has no action in a length-{} trajectory", truth.len())));
    }
    let c = actor.encode(env, truth)?;
    let mut forced: BTreeMap<usize, Action> = truth.actions(&env.net)?.into_iter().take(step).enumerate().collect();
    forced.insert(step, action);
    let rec = actor.forced_decode(env, &c, truth.first(), truth.len(), &forced)?;
    let x = truth.vertices();
    let horizon = (step + 1..x.len()).position(|p| {
        env.net.shortest_distance(x[p], rec.cells[p]).is_some_and(|d| d <= delta)
    });
    Ok(Recovery { step, forced: action, horizon, cells: rec.cells })
}

/// Legal actions at `truth[step]` that leave the ground-truth path but keep
/// the next ground-truth cell within one move.
pub fn recoverable_deviations(net: &RoadNetwork, truth: &Trajectory, step: usize) -> Vec<Action> {
    let x = truth.vertices();
    if step + 2 > x.len() {
        return Vec::new();
    }
    let next = x[step + 1];
    let after = x.get(step + 2).copied();
    Action::ALL
        .into_iter()
        .filter(|&a| match net.transition(x[step], a) {
            Some(to) if to != next => after.is_none_or(|n| net.shortest_distance(to, n).is_some_and(|d| d <= 1)),
            _ => false,
        })
        .collect()
}

/// Up to `trials` forced deviations at `step`, taken in corpus order and
/// action order, each paired with the index of its trajectory.
pub fn recoverability_trials(
    actor: &Actor,
    env: &Env,
    corpus: &[Trajectory],
    step: usize,
    delta: u32,
    trials: usize,
) -> Result<Vec<(usize, Recovery)>> {
    let mut out = Vec::with_capacity(trials);
    for (i, t) in corpus.iter().enumerate() {
        for action in recoverable_deviations(&env.net, t, step) {
            if out.len() == trials {
                return Ok(out);
            }
            out.push((i, rejoin_horizon(actor, env, t, step, action, delta)?));
        }
    }
    Ok(out)
}

/// Median with `None` ordered after every finite horizon.
pub fn median_horizon(horizons: &[Option<usize>]) -> Option<f64> {
    if horizons.is_empty() {
        return None;
    }
    let mut v: Vec<f64> = horizons.iter().map(|h| h.map_or(f64::INFINITY, |x| x as f64)).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let m = if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 };
    Some(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn traj(net: &RoadNetwork, cells: &[usize]) -> Trajectory {
        Trajectory::new(net, cells.to_vec(), None).unwrap()
    }

    #[test]
    fn trajectory_error_cases() {
        let net = presets::open_grid(10, 1);
        let a = traj(&net, &[0, 1, 2]);
        assert_eq!(trajectory_error(&net, &a, &a).unwrap(), 0);
        let b = traj(&net, &[1, 2, 3]);
        assert_eq!(trajectory_error(&net, &a, &b).unwrap(), 3);
        let long = traj(&net, &[5, 4, 3, 2, 1, 0]);
        let brute = (0..=3)
            .map(|d| (0..3).map(|t| u64::from(net.shortest_distance(a.vertices()[t], long.vertices()[t + d]).unwrap())).sum::<u64>())
            .min()
            .unwrap();
        assert_eq!(trajectory_error(&net, &a, &long).unwrap(), brute);
        assert_eq!(trajectory_error(&net, &long, &a).unwrap(), brute);
    }

    #[test]
    fn wcse_singletons_and_duplicates() {
        let net = presets::open_grid(10, 1);
        let ts = vec![traj(&net, &[0, 1]), traj(&net, &[5, 6]), traj(&net, &[5, 6])];
        let reps = vec![vec![0.0], vec![5.0], vec![5.0]];
        let k3 = kmeans(&reps, 2, 0, KMeansOptions::default()).unwrap();
        assert_eq!(wcse(&net, &k3, &ts).unwrap(), 0);
    }

    #[test]
    fn median_orders_infinite_last() {
        assert_eq!(median_horizon(&[Some(1), None, Some(3)]), Some(3.0));
        assert_eq!(median_horizon(&[Some(1), Some(2)]), Some(1.5));
        assert_eq!(median_horizon(&[None, None]), Some(f64::INFINITY));
        assert_eq!(median_horizon(&[]), None);
    }

    #[test]
    fn deviations_leave_the_path() {
        let net = presets::open_grid(5, 5);
        let t = traj(&net, &[0, 1, 2, 3]);
        let devs = recoverable_deviations(&net, &t, 1);
        assert!(!devs.is_empty());
        for a in devs {
            let to = net.transition(1, a).unwrap();
            assert_ne!(to, 2);
            assert!(net.shortest_distance(to, 3).unwrap() <= 1);
        }
    }
}
