//! Q-value estimator and the reward definitions it is trained against.
//!
//! The critic reads the ground-truth trajectory with an LSTM, tracks the
//! reconstruction prefix with a second LSTM, attends over the ground-truth
//! states with a bilinear score and emits one value per action through a
//! dueling head `Q(a) = V + A(a) − mean A`.

use crate::actor::{sample_action, Actor, Policy};
use crate::error::{Error, Result};
use crate::grid::{Action, RoadNetwork, Trajectory, VertexId};
use crate::nn::{self, Embedder, Linear, Lstm, LstmState};
use crate::rng;
use crate::tensor::{Checkpoint, Gradients, ParameterStore, Tape, Tensor, Var};
use crate::Env;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

pub type QVector = [f64; Action::COUNT];

/// Regression target for the value of `action` taken at 0-based step `step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QTarget {
    pub step: usize,
    pub action: Action,
    pub value: f64,
}

/// 0 when the reconstructed cell is within `delta` hops of the truth, −1 otherwise.
pub fn reward(net: &RoadNetwork, truth: VertexId, recon: VertexId, delta: u32) -> i32 {
    match net.shortest_distance(truth, recon) {
        Some(d) if d <= delta => 0,
        _ => -1,
    }
}

/// Sum of step rewards over `t = 2..T`.
pub fn total_reward(net: &RoadNetwork, truth: &[VertexId], recon: &[VertexId], delta: u32) -> Result<i64> {
    if truth.len() != recon.len() {
        return Err(Error::contract(format!("length mismatch: {} vs {}", truth.len(), recon.len())));
    }
    Ok(truth.iter().zip(recon).skip(1).map(|(&x, &y)| i64::from(reward(net, x, y, delta))).sum())
}

/// `r + Σ_{a: p′(a) > 0} p′(a)·Q′(a)`, or `r` at the terminal step.
pub fn bellman_target(reward: f64, next_policy: &Policy, next_q: &QVector, terminal: bool) -> f64 {
    if terminal {
        return reward;
    }
    reward
        + next_policy
            .iter()
            .zip(next_q)
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, q)| p * q)
            .sum::<f64>()
}

/// Monte-Carlo estimate of the future reward sum after `prefix` under the
/// actor's sampling policy. `prefix` holds `x̂_1..x̂_t` with `1 ≤ t ≤ T`.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_value(
    actor: &Actor,
    env: &Env,
    c: &[f64],
    truth: &Trajectory,
    prefix: &[VertexId],
    rollouts: usize,
    seed: u64,
    delta: u32,
) -> Result<f64> {
    let x = truth.vertices();
    if prefix.is_empty() || prefix.len() > x.len() {
        return Err(Error::contract(format!("prefix length {} outside 1..={}", prefix.len(), x.len())));
    }
    if rollouts == 0 {
        return Err(Error::contract("monte_carlo_value needs at least one rollout"));
    }
    let mut tape = Tape::no_grad();
    let bound = actor.bind(&mut tape, env)?;
    let cv = tape.constant(Tensor::vector(c.to_vec())?);
    let mut memo: HashMap<Vec<VertexId>, (LstmState, Policy)> = HashMap::new();
    let mut state = bound.initial_state(&mut tape);
    for k in 0..prefix.len() {
        let (next, p) = bound.step(&mut tape, state, prefix[k], cv)?;
        state = next;
        let mut policy = [0.0; Action::COUNT];
        policy.copy_from_slice(tape.data(p));
        memo.insert(prefix[..=k].to_vec(), (next, policy));
    }

    let mut rng = rng::stream(seed, "monte-carlo");
    let mut total = 0.0;
    for _ in 0..rollouts {
        let mut path = prefix.to_vec();
        let mut sum = 0i64;
        while path.len() < x.len() {
            let (_, policy) = memo[&path];
            let action = sample_action(&policy, &mut rng);
            let cur = *path.last().expect("non-empty path");
            let next = env.net.transition(cur, action).expect("policy is supported on legal actions");
            sum += i64::from(reward(&env.net, x[path.len()], next, delta));
            let parent = memo[&path].0;
            path.push(next);
            if path.len() < x.len() && !memo.contains_key(&path) {
                let (st, p) = bound.step(&mut tape, parent, next, cv)?;
                let mut policy = [0.0; Action::COUNT];
                policy.copy_from_slice(tape.data(p));
                memo.insert(path.clone(), (st, policy));
            }
        }
        total += sum as f64;
    }
    Ok(total / rollouts as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CriticConfig {
    /// Width of the tanh layer feeding the dueling head.
    pub hidden: usize,
    /// Hidden size of both LSTMs, which is also the attention dimension.
    pub state_dim: usize,
    /// Weight of `Σ_t Σ_a (Q_t(a) − mean Q_t)²` added to the regression
    /// loss; keeps values of never-tried actions near the state value.
    pub action_penalty: f64,
}

impl Default for CriticConfig {
    fn default() -> Self {
        Self { hidden: 512, state_dim: 64, action_penalty: 0.0 }
    }
}

impl CriticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.state_dim == 0 {
            return Err(Error::config("critic sizes must be positive"));
        }
        if !(self.action_penalty >= 0.0 && self.action_penalty.is_finite()) {
            return Err(Error::config("critic action_penalty must be a finite non-negative number"));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct CriticMeta {
    kind: String,
    config: CriticConfig,
    embed_dim: usize,
    map_hash: String,
}

#[derive(Debug, Clone)]
pub struct Critic {
    config: CriticConfig,
    embed_dim: usize,
    params: ParameterStore,
}

/// Intermediate values of one critic evaluation.
#[derive(Debug, Clone, Copy)]
pub struct QParts {
    pub q: Var,
    pub attention: Var,
    pub advantage: Var,
    pub value: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct BoundCritic<'a> {
    enc: Lstm,
    dec: Lstm,
    att: Var,
    hid: Linear,
    adv: Linear,
    val: Linear,
    ones: Var,
    embed: Embedder<'a>,
}

/// Ground-truth annotations on a tape: rows `[T, S]` and their transpose.
#[derive(Debug, Clone, Copy)]
pub struct Annotations {
    pub rows: Var,
    pub columns: Var,
}

impl Critic {
    pub fn new(env: &Env, config: CriticConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let e = env.embeddings.dim();
        let s = config.state_dim;
        let mut rng = rng::stream(seed, "critic-init");
        let mut params = ParameterStore::new();
        nn::register_lstm(&mut params, &mut rng, "enc", e, s)?;
        nn::register_lstm(&mut params, &mut rng, "dec", e, s)?;
        params.insert("att", nn::init_uniform(&mut rng, vec![s, s], s))?;
        nn::register_linear(&mut params, &mut rng, "hid", 2 * s, config.hidden)?;
        nn::register_linear(&mut params, &mut rng, "adv", config.hidden, Action::COUNT)?;
        nn::register_linear(&mut params, &mut rng, "val", config.hidden, 1)?;
        Ok(Self { config, embed_dim: e, params })
    }

    pub fn config(&self) -> &CriticConfig {
        &self.config
    }

    pub fn params(&self) -> &ParameterStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterStore {
        &mut self.params
    }

    pub fn bind<'a>(&'a self, tape: &mut Tape<'a>, env: &'a Env) -> Result<BoundCritic<'a>> {
        if env.embeddings.dim() != self.embed_dim {
            return Err(Error::contract("critic embedding dimension does not match the environment"));
        }
        Ok(BoundCritic {
            enc: Lstm::bind(tape, &self.params, "enc")?,
            dec: Lstm::bind(tape, &self.params, "dec")?,
            att: tape.param(&self.params, "att")?,
            hid: Linear::bind(tape, &self.params, "hid")?,
            adv: Linear::bind(tape, &self.params, "adv")?,
            val: Linear::bind(tape, &self.params, "val")?,
            ones: tape.constant(Tensor::new(vec![Action::COUNT, 1], vec![1.0; Action::COUNT])?),
            embed: Embedder::Frozen(&env.embeddings),
        })
    }

    /// Hidden state of the ground-truth encoder after each cell.
    pub fn encode(&self, env: &Env, truth: &Trajectory) -> Result<Vec<Vec<f64>>> {
        let mut tape = Tape::no_grad();
        let bound = self.bind(&mut tape, env)?;
        let ann = bound.annotate(&mut tape, truth.vertices())?;
        Ok(tape.data(ann.rows).chunks(self.config.state_dim).map(<[f64]>::to_vec).collect())
    }

    /// Q-values after the decoder has consumed `prefix`.
    pub fn q_values(&self, env: &Env, truth: &Trajectory, prefix: &[VertexId]) -> Result<QVector> {
        Ok(*self.q_sequence(env, truth, prefix)?.last().expect("non-empty prefix"))
    }

    /// Q-values for every prefix `prefix[..=t]`.
    pub fn q_sequence(&self, env: &Env, truth: &Trajectory, prefix: &[VertexId]) -> Result<Vec<QVector>> {
        let mut tape = Tape::no_grad();
        let bound = self.bind(&mut tape, env)?;
        let ann = bound.annotate(&mut tape, truth.vertices())?;
        let parts = bound.q_prefixes(&mut tape, ann, prefix)?;
        Ok(parts.iter().map(|p| q_array(tape.data(p.q))).collect())
    }

    /// `Σ_t (Q(ŷ_t; X̂_{1..t}) − q_t)²` and its gradient; `recon` is `X̂`
    /// and `targets[t]` pairs with `actions[t]`.
    pub fn loss_gradients(
        &self,
        env: &Env,
        truth: &Trajectory,
        recon: &[VertexId],
        actions: &[Action],
        targets: &[f64],
    ) -> Result<(f64, Gradients)> {
        let mut tape = Tape::new();
        let loss = self.loss_on_tape(&mut tape, env, truth, recon, actions, targets)?;
        let grads = tape.backward(loss)?;
        Ok((tape.value(loss).item(), grads))
    }

    pub fn loss(&self, env: &Env, truth: &Trajectory, recon: &[VertexId], actions: &[Action], targets: &[f64]) -> Result<f64> {
        let mut tape = Tape::no_grad();
        let loss = self.loss_on_tape(&mut tape, env, truth, recon, actions, targets)?;
        Ok(tape.value(loss).item())
    }

    fn loss_on_tape<'a>(
        &'a self,
        tape: &mut Tape<'a>,
        env: &'a Env,
        truth: &Trajectory,
        recon: &[VertexId],
        actions: &[Action],
        targets: &[f64],
    ) -> Result<Var> {
        if actions.len() != targets.len() || recon.len() != actions.len() + 1 {
            return Err(Error::contract(format!(
                "critic loss needs |X̂| = |Ŷ| + 1 = |q| + 1, got {}, {}, {}",
                recon.len(),
                actions.len(),
                targets.len()
            )));
        }
        let pairs: Vec<QTarget> = actions
            .iter()
            .zip(targets)
            .enumerate()
            .map(|(step, (&action, &value))| QTarget { step, action, value })
            .collect();
        self.regression_on_tape(tape, env, truth, &recon[..actions.len()], &pairs)
    }

    /// `Σ (Q(a; X̂_{1..t+1}) − q)²` over arbitrary `(t, a, q)` triples, where
    /// `prefix[..=t]` is the prefix seen before acting at step `t`.
    pub fn regression_gradients(&self, env: &Env, truth: &Trajectory, prefix: &[VertexId], targets: &[QTarget]) -> Result<(f64, Gradients)> {
        let mut tape = Tape::new();
        let loss = self.regression_on_tape(&mut tape, env, truth, prefix, targets)?;
        let grads = tape.backward(loss)?;
        Ok((tape.value(loss).item(), grads))
    }

    fn regression_on_tape<'a>(
        &'a self,
        tape: &mut Tape<'a>,
        env: &'a Env,
        truth: &Trajectory,
        prefix: &[VertexId],
        targets: &[QTarget],
    ) -> Result<Var> {
        if let Some(t) = targets.iter().position(|q| !q.value.is_finite()) {
            return Err(Error::contract(format!("critic target {t} is not finite")));
        }
        if let Some(t) = targets.iter().find(|q| q.step >= prefix.len()) {
            return Err(Error::contract(format!("target step {} outside a prefix of {}", t.step, prefix.len())));
        }
        if targets.is_empty() {
            return Ok(tape.constant(Tensor::scalar(0.0)?));
        }
        let bound = self.bind(tape, env)?;
        let ann = bound.annotate(tape, truth.vertices())?;
        let parts = bound.q_prefixes(tape, ann, prefix)?;
        let mut picked = Vec::with_capacity(targets.len());
        for t in targets {
            picked.push(tape.slice(parts[t.step].q, t.action.index(), 1)?);
        }
        let q = tape.concat(&picked)?;
        let target = tape.constant(Tensor::vector(targets.iter().map(|t| t.value).collect())?);
        let diff = tape.sub(q, target)?;
        let sq = tape.square(diff)?;
        let fit = tape.sum(sq)?;
        if self.config.action_penalty == 0.0 {
            return Ok(fit);
        }
        let mut spreads = Vec::with_capacity(parts.len());
        for p in &parts {
            let mean = tape.mean(p.q)?;
            let level = tape.matmul(bound.ones, mean)?;
            let centered = tape.sub(p.q, level)?;
            let sq = tape.square(centered)?;
            spreads.push(tape.sum(sq)?);
        }
        let all = tape.concat(&spreads)?;
        let spread = tape.sum(all)?;
        let penalty = tape.scale(spread, self.config.action_penalty)?;
        Ok(tape.add(fit, penalty)?)
    }

    pub fn to_checkpoint(&self, env: &Env) -> Result<Checkpoint> {
        let meta = CriticMeta {
            kind: "critic".into(),
            config: self.config,
            embed_dim: self.embed_dim,
            map_hash: env.net.hash().to_string(),
        };
        Ok(Checkpoint::new(serde_json::to_string(&meta)?, self.params.clone()))
    }

    pub fn from_checkpoint(ckpt: Checkpoint, env: &Env) -> Result<Self> {
        let meta: CriticMeta = serde_json::from_str(&ckpt.meta)
            .map_err(|e| Error::data(format!("checkpoint metadata is not a critic: {e}")))?;
        if meta.kind != "critic" {
            return Err(Error::data(format!("expected a critic checkpoint, found `{}`", meta.kind)));
        }
        if meta.map_hash != env.net.hash() {
            return Err(Error::data("critic checkpoint was trained on a different map"));
        }
        let fresh = Critic::new(env, meta.config, 0)?;
        for name in fresh.params.names() {
            if fresh.params.get(name).map(Tensor::shape) != ckpt.store.get(name).map(Tensor::shape) {
                return Err(Error::data(format!("critic checkpoint parameter `{name}` is missing or misshapen")));
            }
        }
        if fresh.params.len() != ckpt.store.len() {
            return Err(Error::data("critic checkpoint has unexpected parameters"));
        }
        Ok(Self { config: meta.config, embed_dim: meta.embed_dim, params: ckpt.store })
    }
}

fn q_array(data: &[f64]) -> QVector {
    let mut q = [0.0; Action::COUNT];
    q.copy_from_slice(data);
    q
}

impl<'a> BoundCritic<'a> {
    pub fn annotate(&self, tape: &mut Tape<'a>, truth: &[VertexId]) -> Result<Annotations> {
        if truth.is_empty() {
            return Err(Error::contract("cannot encode an empty trajectory"));
        }
        let mut state = self.enc.zero_state(tape);
        let mut hs = Vec::with_capacity(truth.len());
        for &v in truth {
            let x = self.embed.lookup(tape, v)?;
            state = self.enc.step(tape, x, state)?;
            hs.push(state.h);
        }
        let rows = tape.stack(&hs)?;
        let columns = tape.transpose(rows)?;
        Ok(Annotations { rows, columns })
    }

    pub fn zero_state(&self, tape: &mut Tape<'a>) -> LstmState {
        self.dec.zero_state(tape)
    }

    /// Consumes `cell` and evaluates the head at the new decoder state.
    pub fn step(&self, tape: &mut Tape<'a>, ann: Annotations, state: LstmState, cell: VertexId) -> Result<(LstmState, QParts)> {
        let x = self.embed.lookup(tape, cell)?;
        let state = self.dec.step(tape, x, state)?;
        let s = state.h;
        let u = tape.matmul(self.att, s)?;
        let scores = tape.matmul(ann.rows, u)?;
        let attention = tape.softmax(scores)?;
        let context = tape.matmul(ann.columns, attention)?;
        let joined = tape.concat(&[context, s])?;
        let pre = self.hid.forward(tape, joined)?;
        let hidden = tape.tanh(pre)?;
        let advantage = self.adv.forward(tape, hidden)?;
        let value = self.val.forward(tape, hidden)?;
        let mean = tape.mean(advantage)?;
        let shift = tape.sub(value, mean)?;
        let spread = tape.matmul(self.ones, shift)?;
        let q = tape.add(advantage, spread)?;
        Ok((state, QParts { q, attention, advantage, value }))
    }

    /// Head outputs for each prefix `prefix[..=t]` in one pass.
    pub fn q_prefixes(&self, tape: &mut Tape<'a>, ann: Annotations, prefix: &[VertexId]) -> Result<Vec<QParts>> {
        if prefix.is_empty() {
            return Err(Error::contract("critic prefix must be non-empty"));
        }
        let mut state = self.zero_state(tape);
        let mut out = Vec::with_capacity(prefix.len());
        for &v in prefix {
            let (next, parts) = self.step(tape, ann, state, v)?;
            state = next;
            out.push(parts);
        }
        Ok(out)
    }
}
