//! Trajectory autoencoder.
//!
//! A bidirectional LSTM reads the embedded cells of a trajectory and the two
//! final hidden states are concatenated into the representation `c`. The
//! decoder is an LSTM whose input at every step is `[embed(x̂_t); c]`; its
//! output layer is a softmax masked to the legal actions of `x̂_t`, so every
//! reconstruction is a legal walk on the road network.

use crate::error::{Error, Result};
use crate::grid::{Action, RoadNetwork, Trajectory, VertexId};
use crate::nn::{self, Embedder, Linear, Lstm, LstmState};
use crate::rng::{self, Rng};
use crate::tensor::{Checkpoint, Gradients, ParameterStore, Tape, Tensor, Var};
use crate::Env;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub type Policy = [f64; Action::COUNT];

/// What the decoder's output layer scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputHead {
    /// One logit per movement action.
    Actions,
    /// One logit per network vertex; the candidates reachable from the
    /// current cell are gathered and normalized (next-location model).
    Cells,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActorConfig {
    pub repr_dim: usize,
    /// Defaults to `repr_dim`.
    pub decoder_hidden: Option<usize>,
    pub finetune_embeddings: bool,
    pub head: OutputHead,
}

impl Default for ActorConfig {
    fn default() -> Self {
        Self { repr_dim: 64, decoder_hidden: None, finetune_embeddings: false, head: OutputHead::Actions }
    }
}

impl ActorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repr_dim < 2 || self.repr_dim % 2 != 0 {
            return Err(Error::config(format!("repr_dim must be even and at least 2, got {}", self.repr_dim)));
        }
        if self.decoder_hidden == Some(0) {
            return Err(Error::config("decoder_hidden must be positive"));
        }
        Ok(())
    }

    pub fn decoder_hidden(&self) -> usize {
        self.decoder_hidden.unwrap_or(self.repr_dim)
    }
}

/// How ground-truth likelihood is accumulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Forcing {
    /// Decoder inputs are the ground-truth cells.
    #[default]
    Teacher,
    /// Decoder inputs are its own greedy outputs; terms accumulate up to and
    /// including the first step whose greedy action departs from the truth.
    FreeRunning,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecodeMode {
    Greedy,
    Sample,
    EpsilonGreedy(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub cells: Vec<VertexId>,
    pub actions: Vec<Action>,
    pub policies: Vec<Policy>,
}

impl Reconstruction {
    pub fn to_trajectory(&self, label: Option<u32>) -> Trajectory {
        Trajectory::from_vertices_unchecked(self.cells.clone(), label)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

/// First action with maximal probability, in action order.
pub fn greedy_action(policy: &Policy) -> Action {
    let mut best = 0;
    for (i, &p) in policy.iter().enumerate() {
        if p > policy[best] {
            best = i;
        }
    }
    Action::ALL[best]
}

pub fn sample_action(policy: &Policy, rng: &mut Rng) -> Action {
    let x: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = greedy_action(policy);
    for (i, &p) in policy.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = Action::ALL[i];
            if x < acc {
                return last;
            }
        }
    }
    last
}

/// Uniform legal action with probability `epsilon`, otherwise the argmax.
pub fn epsilon_greedy_action(policy: &Policy, legal: &[Action], epsilon: f64, rng: &mut Rng) -> Action {
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        legal[rng.gen_range(0..legal.len())]
    } else {
        greedy_action(policy)
    }
}

fn policy_array(data: &[f64]) -> Policy {
    let mut p = [0.0; Action::COUNT];
    p.copy_from_slice(data);
    p
}

#[derive(Serialize, Deserialize)]
struct ActorMeta {
    kind: String,
    config: ActorConfig,
    cells: usize,
    embed_dim: usize,
    map_hash: String,
}

#[derive(Debug, Clone)]
pub struct Actor {
    config: ActorConfig,
    cells: usize,
    embed_dim: usize,
    params: ParameterStore,
}

/// Actor parameters bound to a tape.
#[derive(Debug, Clone, Copy)]
pub struct BoundActor<'a> {
    enc_fwd: Lstm,
    enc_bwd: Lstm,
    dec: Lstm,
    out: Linear,
    embed: Embedder<'a>,
    head: OutputHead,
    net: &'a RoadNetwork,
}

impl Actor {
    pub fn new(env: &Env, config: ActorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let e = env.embeddings.dim();
        let half = config.repr_dim / 2;
        let hd = config.decoder_hidden();
        let outputs = match config.head {
            OutputHead::Actions => Action::COUNT,
            OutputHead::Cells => env.net.len(),
        };
        let mut rng = rng::stream(seed, "actor-init");
        let mut params = ParameterStore::new();
        nn::register_lstm(&mut params, &mut rng, "enc.fwd", e, half)?;
        nn::register_lstm(&mut params, &mut rng, "enc.bwd", e, half)?;
        nn::register_lstm(&mut params, &mut rng, "dec", e + config.repr_dim, hd)?;
        nn::register_linear(&mut params, &mut rng, "out", hd, outputs)?;
        if config.finetune_embeddings {
            let rows: Vec<f64> = (0..env.net.len()).flat_map(|v| env.embeddings.embed(v).unwrap().to_vec()).collect();
            params.insert("embed", Tensor::new(vec![env.net.len(), e], rows)?)?;
        }
        Ok(Self { config, cells: env.net.len(), embed_dim: e, params })
    }

    pub fn config(&self) -> &ActorConfig {
        &self.config
    }

    pub fn repr_dim(&self) -> usize {
        self.config.repr_dim
    }

    pub fn params(&self) -> &ParameterStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterStore {
        &mut self.params
    }

    fn check_env(&self, env: &Env) -> Result<()> {
        if env.net.len() != self.cells || env.embeddings.dim() != self.embed_dim {
            return Err(Error::contract(format!(
                "actor was built for {} cells with {}-dim embeddings, environment has {} and {}",
                self.cells,
                self.embed_dim,
                env.net.len(),
                env.embeddings.dim()
            )));
        }
        Ok(())
    }

    pub fn bind<'a>(&'a self, tape: &mut Tape<'a>, env: &'a Env) -> Result<BoundActor<'a>> {
        self.check_env(env)?;
        let embed = if self.config.finetune_embeddings {
            Embedder::Tuned { table: tape.param(&self.params, "embed")?, dim: self.embed_dim }
        } else {
            Embedder::Frozen(&env.embeddings)
        };
        Ok(BoundActor {
            enc_fwd: Lstm::bind(tape, &self.params, "enc.fwd")?,
            enc_bwd: Lstm::bind(tape, &self.params, "enc.bwd")?,
            dec: Lstm::bind(tape, &self.params, "dec")?,
            out: Linear::bind(tape, &self.params, "out")?,
            embed,
            head: self.config.head,
            net: &env.net,
        })
    }

    pub fn encode(&self, env: &Env, traj: &Trajectory) -> Result<Vec<f64>> {
        let mut tape = Tape::no_grad();
        let bound = self.bind(&mut tape, env)?;
        let c = bound.encode(&mut tape, traj.vertices())?;
        Ok(tape.data(c).to_vec())
    }

    pub fn initial_state(&self) -> DecoderState {
        let hd = self.config.decoder_hidden();
        DecoderState { h: vec![0.0; hd], c: vec![0.0; hd] }
    }

    /// One decoder step from `state` at `cell`, conditioned on `c`.
    pub fn decode_step(&self, env: &Env, state: &DecoderState, cell: VertexId, c: &[f64]) -> Result<(DecoderState, Policy)> {
        let mut tape = Tape::no_grad();
        let bound = self.bind(&mut tape, env)?;
        let st = LstmState {
            h: tape.constant(Tensor::vector(state.h.clone())?),
            c: tape.constant(Tensor::vector(state.c.clone())?),
        };
        let cv = tape.constant(self.repr_tensor(c)?);
        let (next, p) = bound.step(&mut tape, st, cell, cv)?;
        let out = DecoderState { h: tape.data(next.h).to_vec(), c: tape.data(next.c).to_vec() };
        Ok((out, policy_array(tape.data(p))))
    }

    fn repr_tensor(&self, c: &[f64]) -> Result<Tensor> {
        if c.len() != self.config.repr_dim {
            return Err(Error::contract(format!("representation has {} values, expected {}", c.len(), self.config.repr_dim)));
        }
        Ok(Tensor::vector(c.to_vec())?)
    }

    /// Decodes `len` cells from `start`, choosing each action with `choose(step, cell, policy)`.
    pub fn rollout(
        &self,
        env: &Env,
        c: &[f64],
        start: VertexId,
        len: usize,
        mut choose: impl FnMut(usize, VertexId, &Policy) -> Result<Action>,
    ) -> Result<Reconstruction> {
        if len == 0 {
            return Err(Error::contract("reconstruction length must be at least 1"));
        }
        if start >= env.net.len() {
            return Err(Error::Lookup(format!("vertex {start} is not in the network")));
        }
        let mut tape = Tape::no_grad();
        let bound = self.bind(&mut tape, env)?;
        let cv = tape.constant(self.repr_tensor(c)?);
        let mut state = bound.initial_state(&mut tape);
        let mut out = Reconstruction { cells: vec![start], actions: Vec::new(), policies: Vec::new() };
        let mut cur = start;
        for step in 0..len - 1 {
            let (next, p) = bound.step(&mut tape, state, cur, cv)?;
            state = next;
            let policy = policy_array(tape.data(p));
            let action = choose(step, cur, &policy)?;
            let Some(to) = env.net.transition(cur, action) else {
                return Err(Error::contract(format!("action {} is illegal at vertex {cur} (step {step})", action.label())));
            };
            out.actions.push(action);
            out.policies.push(policy);
            out.cells.push(to);
            cur = to;
        }
        Ok(out)
    }

    pub fn reconstruct(&self, env: &Env, c: &[f64], start: VertexId, len: usize, mode: DecodeMode, rng: &mut Rng) -> Result<Reconstruction> {
        if let DecodeMode::EpsilonGreedy(eps) = mode {
            if !(0.0..=1.0).contains(&eps) {
                return Err(Error::config(format!("epsilon must lie in [0, 1], got {eps}")));
            }
        }
        self.rollout(env, c, start, len, |_, cell, policy| {
            Ok(match mode {
                DecodeMode::Greedy => greedy_action(policy),
                DecodeMode::Sample => sample_action(policy, rng),
                DecodeMode::EpsilonGreedy(eps) => epsilon_greedy_action(policy, &env.net.legal_actions(cell), eps, rng),
            })
        })
    }

    /// Greedy reconstruction of `traj` from its own representation.
    pub fn autoencode(&self, env: &Env, traj: &Trajectory) -> Result<Reconstruction> {
        let c = self.encode(env, traj)?;
        self.reconstruct(env, &c, traj.first(), traj.len(), DecodeMode::Greedy, &mut rng::seeded(0))
    }

    /// Greedy decoding except at the 0-based action indices in `overrides`.
    pub fn forced_decode(
        &self,
        env: &Env,
        c: &[f64],
        start: VertexId,
        len: usize,
        overrides: &BTreeMap<usize, Action>,
    ) -> Result<Reconstruction> {
        self.rollout(env, c, start, len, |step, cell, policy| match overrides.get(&step) {
            Some(&a) if env.net.transition(cell, a).is_some() => Ok(a),
            Some(&a) => Err(Error::contract(format!("forced action {} is illegal at step {step}", a.label()))),
            None => Ok(greedy_action(policy)),
        })
    }

    /// Negative log-likelihood of the ground-truth actions.
    pub fn mll_loss(&self, env: &Env, traj: &Trajectory, forcing: Forcing) -> Result<f64> {
        let mut tape = Tape::no_grad();
        let loss = self.mll_on_tape(&mut tape, env, traj, forcing)?;
        Ok(tape.value(loss).item())
    }

    pub fn mll_gradients(&self, env: &Env, traj: &Trajectory, forcing: Forcing) -> Result<(f64, Gradients)> {
        let mut tape = Tape::new();
        let loss = self.mll_on_tape(&mut tape, env, traj, forcing)?;
        let grads = tape.backward(loss)?;
        Ok((tape.value(loss).item(), grads))
    }

    /// `Σ_t Σ_a p(a | prefix[..=t], c) · q[t][a]` for the decoder run over
    /// `prefix`, with `q` held constant.
    pub fn expected_value(&self, env: &Env, truth: &Trajectory, prefix: &[VertexId], q: &[[f64; Action::COUNT]]) -> Result<f64> {
        let mut tape = Tape::no_grad();
        let value = self.expected_value_on_tape(&mut tape, env, truth, prefix, q)?;
        Ok(tape.value(value).item())
    }

    /// The expected value and its gradient with respect to the actor parameters.
    pub fn expected_value_gradients(
        &self,
        env: &Env,
        truth: &Trajectory,
        prefix: &[VertexId],
        q: &[[f64; Action::COUNT]],
    ) -> Result<(f64, Gradients)> {
        let mut tape = Tape::new();
        let value = self.expected_value_on_tape(&mut tape, env, truth, prefix, q)?;
        let grads = tape.backward(value)?;
        Ok((tape.value(value).item(), grads))
    }

    fn expected_value_on_tape<'a>(
        &'a self,
        tape: &mut Tape<'a>,
        env: &'a Env,
        truth: &Trajectory,
        prefix: &[VertexId],
        q: &[[f64; Action::COUNT]],
    ) -> Result<Var> {
        if prefix.is_empty() || q.len() != prefix.len() {
            return Err(Error::contract(format!("{} value rows for a prefix of {} cells", q.len(), prefix.len())));
        }
        let bound = self.bind(tape, env)?;
        let c = bound.encode(tape, truth.vertices())?;
        let mut state = bound.initial_state(tape);
        let mut terms = Vec::with_capacity(prefix.len());
        for (&cell, row) in prefix.iter().zip(q) {
            let (next, p) = bound.step(tape, state, cell, c)?;
            state = next;
            let q = tape.constant(Tensor::vector(row.to_vec())?);
            let weighted = tape.mul(p, q)?;
            terms.push(tape.sum(weighted)?);
        }
        let all = tape.concat(&terms)?;
        Ok(tape.sum(all)?)
    }

    fn mll_on_tape<'a>(&'a self, tape: &mut Tape<'a>, env: &'a Env, traj: &Trajectory, forcing: Forcing) -> Result<Var> {
        let actions = traj.actions(&env.net)?;
        let cells = traj.vertices();
        let bound = self.bind(tape, env)?;
        let c = bound.encode(tape, cells)?;
        let mut state = bound.initial_state(tape);
        let mut terms = Vec::with_capacity(actions.len());
        for (t, &y) in actions.iter().enumerate() {
            if env.net.transition(cells[t], y).is_none() {
                return Err(Error::data(format!("ground-truth action {} is illegal at step {t}", y.label())));
            }
            let (next, p) = bound.step(tape, state, cells[t], c)?;
            state = next;
            let pick = tape.slice(p, y.index(), 1)?;
            terms.push(tape.log(pick)?);
            if forcing == Forcing::FreeRunning && greedy_action(&policy_array(tape.data(p))) != y {
                break;
            }
        }
        if terms.is_empty() {
            return Ok(tape.constant(Tensor::scalar(0.0)?));
        }
        let all = tape.concat(&terms)?;
        let total = tape.sum(all)?;
        Ok(tape.scale(total, -1.0)?)
    }

    pub fn to_checkpoint(&self, env: &Env) -> Result<Checkpoint> {
        let meta = ActorMeta {
            kind: "actor".into(),
            config: self.config,
            cells: self.cells,
            embed_dim: self.embed_dim,
            map_hash: env.net.hash().to_string(),
        };
        Ok(Checkpoint::new(serde_json::to_string(&meta)?, self.params.clone()))
    }

    pub fn from_checkpoint(ckpt: Checkpoint, env: &Env) -> Result<Self> {
        let meta: ActorMeta = serde_json::from_str(&ckpt.meta)
            .map_err(|e| Error::data(format!("checkpoint metadata is not an actor: {e}")))?;
        if meta.kind != "actor" {
            return Err(Error::data(format!("expected an actor checkpoint, found `{}`", meta.kind)));
        }
        if meta.map_hash != env.net.hash() {
            return Err(Error::data("actor checkpoint was trained on a different map"));
        }
        let fresh = Actor::new(env, meta.config, 0)?;
        if fresh.params.names() != ckpt.store.names() {
            return Err(Error::data("actor checkpoint parameters do not match its configuration"));
        }
        for name in fresh.params.names() {
            if fresh.params.get(name).map(Tensor::shape) != ckpt.store.get(name).map(Tensor::shape) {
                return Err(Error::data(format!("actor checkpoint parameter `{name}` has the wrong shape")));
            }
        }
        let actor = Self { config: meta.config, cells: meta.cells, embed_dim: meta.embed_dim, params: ckpt.store };
        actor.check_env(env)?;
        Ok(actor)
    }
}

impl<'a> BoundActor<'a> {
    pub fn net(&self) -> &'a RoadNetwork {
        self.net
    }

    pub fn embed(&self, tape: &mut Tape<'a>, cell: VertexId) -> Result<Var> {
        self.embed.lookup(tape, cell)
    }

    /// Representation `c = [h_fwd(T); h_bwd(1)]`.
    pub fn encode(&self, tape: &mut Tape<'a>, cells: &[VertexId]) -> Result<Var> {
        if cells.is_empty() {
            return Err(Error::contract("cannot encode an empty trajectory"));
        }
        let inputs = cells.iter().map(|&v| self.embed(tape, v)).collect::<Result<Vec<_>>>()?;
        let mut fwd = self.enc_fwd.zero_state(tape);
        for &x in &inputs {
            fwd = self.enc_fwd.step(tape, x, fwd)?;
        }
        let mut bwd = self.enc_bwd.zero_state(tape);
        for &x in inputs.iter().rev() {
            bwd = self.enc_bwd.step(tape, x, bwd)?;
        }
        Ok(tape.concat(&[fwd.h, bwd.h])?)
    }

    pub fn initial_state(&self, tape: &mut Tape<'a>) -> LstmState {
        self.dec.zero_state(tape)
    }

    /// Advances the decoder by consuming `cell`; returns the policy over
    /// actions at `cell`.
    pub fn step(&self, tape: &mut Tape<'a>, state: LstmState, cell: VertexId, c: Var) -> Result<(LstmState, Var)> {
        let x = self.embed(tape, cell)?;
        let input = tape.concat(&[x, c])?;
        let state = self.dec.step(tape, input, state)?;
        let logits = self.out.forward(tape, state.h)?;
        let mask = self.net.mask_f64(cell);
        let logits = match self.head {
            OutputHead::Actions => logits,
            OutputHead::Cells => {
                let mut picked = Vec::with_capacity(Action::COUNT);
                for a in Action::ALL {
                    picked.push(match self.net.transition(cell, a) {
                        Some(to) => tape.slice(logits, to, 1)?,
                        None => tape.constant(Tensor::scalar(0.0)?),
                    });
                }
                tape.concat(&picked)?
            }
        };
        Ok((state, tape.masked_softmax(logits, &mask)?))
    }
}
