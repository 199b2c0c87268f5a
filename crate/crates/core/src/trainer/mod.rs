//! Likelihood pretraining and the actor-critic refinement loop.
//!
//! The loop keeps slowly tracking copies of both networks. Each iteration
//! draws one ground-truth trajectory, reconstructs it with the delayed actor
//! under ε-greedy exploration and stores the result in a replay memory. Once
//! the memory holds a batch, bootstrapped targets from the delayed networks
//! drive one critic step and one actor step, and the delayed copies are
//! soft-updated.

mod config;
mod replay;

pub use config::{ExportActor, TrainConfig, TrainSource};
pub use replay::{Experience, ReplayMemory};

use crate::actor::{greedy_action, Actor, DecodeMode, Forcing, Policy};
use crate::critic::{bellman_target, reward, total_reward, Critic, QTarget, QVector};
use crate::error::{Error, Result};
use crate::grid::{Action, RoadNetwork, Trajectory, VertexId};
use crate::rng::{self, Rng};
use crate::tensor::{soft_update, Adam, Tape};
use crate::Env;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::Write;

/// Where ground-truth trajectories come from.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    /// Uniform random walks from a uniform random start, length uniform in `min..=max`.
    RandomWalk { min: usize, max: usize },
    Corpus(Vec<Trajectory>),
}

impl Source {
    /// Random walks, or `corpus` when the config selects corpus training.
    pub fn from_config(config: &TrainConfig, corpus: &[Trajectory]) -> Self {
        match config.train_source {
            TrainSource::RandomWalk => Source::RandomWalk { min: config.walk_min, max: config.walk_max },
            TrainSource::Corpus => Source::Corpus(corpus.to_vec()),
        }
    }

    pub fn sample(&self, net: &RoadNetwork, rng: &mut Rng) -> Result<Trajectory> {
        match self {
            Source::RandomWalk { min, max } => {
                let len = rng.gen_range(*min..=*max);
                let start = rng.gen_range(0..net.len());
                net.random_walk_with(start, len, rng)
            }
            Source::Corpus(items) => items
                .choose(rng)
                .cloned()
                .ok_or_else(|| Error::data("training corpus is empty")),
        }
    }

    /// `n` trajectories; a corpus no larger than `n` is returned whole.
    fn batch(&self, net: &RoadNetwork, n: usize, rng: &mut Rng) -> Result<Vec<Trajectory>> {
        match self {
            Source::Corpus(items) if items.len() <= n => {
                if items.is_empty() {
                    return Err(Error::data("training corpus is empty"));
                }
                Ok(items.clone())
            }
            Source::Corpus(items) => Ok(items.choose_multiple(rng, n).cloned().collect()),
            Source::RandomWalk { .. } => (0..n).map(|_| self.sample(net, rng)).collect(),
        }
    }
}

/// `count` random walks with lengths uniform in `min..=max`.
pub fn random_walk_corpus(net: &RoadNetwork, count: usize, min: usize, max: usize, seed: u64) -> Result<Vec<Trajectory>> {
    if min == 0 || min > max {
        return Err(Error::config(format!("invalid walk length range {min}..={max}")));
    }
    let source = Source::RandomWalk { min, max };
    let mut rng = rng::stream(seed, "walk-corpus");
    (0..count).map(|_| source.sample(net, &mut rng)).collect()
}

/// `Σ_{t=2..T} d(x_t, x̂_t)`.
pub fn spatial_objective(net: &RoadNetwork, truth: &[VertexId], recon: &[VertexId]) -> Result<u64> {
    if truth.len() != recon.len() {
        return Err(Error::contract(format!("length mismatch: {} vs {}", truth.len(), recon.len())));
    }
    truth
        .iter()
        .zip(recon)
        .skip(1)
        .map(|(&x, &y)| {
            net.shortest_distance(x, y)
                .map(u64::from)
                .ok_or_else(|| Error::Range(format!("vertices {x} and {y} are not connected")))
        })
        .sum()
}

/// Future reward sums `Σ_{τ≥t} r_τ` for each action index `t`.
pub fn monte_carlo_targets(net: &RoadNetwork, truth: &[VertexId], recon: &[VertexId], delta: u32) -> Vec<f64> {
    let steps = truth.len().saturating_sub(1);
    let mut out = vec![0.0; steps];
    let mut acc = 0.0;
    for t in (0..steps).rev() {
        acc += f64::from(reward(net, truth[t + 1], recon[t + 1], delta));
        out[t] = acc;
    }
    out
}

/// For every step `t` of `recon` and every legal action `a` there, the
/// reward of taking `a` after `recon[..=t]` plus the rewards of greedy
/// decoding by `actor` afterwards.
pub fn greedy_action_returns(actor: &Actor, env: &Env, truth: &Trajectory, recon: &[VertexId], delta: u32) -> Result<Vec<QTarget>> {
    let x = truth.vertices();
    if recon.len() != x.len() {
        return Err(Error::contract(format!("length mismatch: {} vs {}", x.len(), recon.len())));
    }
    let net = &env.net;
    let mut tape = Tape::no_grad();
    let bound = actor.bind(&mut tape, env)?;
    let c = bound.encode(&mut tape, x)?;
    let mut state = bound.initial_state(&mut tape);
    let mut out = Vec::new();
    for t in 0..x.len() - 1 {
        let (after, _) = bound.step(&mut tape, state, recon[t], c)?;
        for action in net.legal_actions(recon[t]) {
            let mut cell = net.transition(recon[t], action).expect("legal action");
            let mut value = f64::from(reward(net, x[t + 1], cell, delta));
            let mut st = after;
            for &truth_next in &x[t + 2..] {
                let (next, p) = bound.step(&mut tape, st, cell, c)?;
                st = next;
                let mut policy = [0.0; Action::COUNT];
                policy.copy_from_slice(tape.data(p));
                cell = net.transition(cell, greedy_action(&policy)).expect("policy is supported on legal actions");
                value += f64::from(reward(net, truth_next, cell, delta));
            }
            out.push(QTarget { step: t, action, value });
        }
        state = after;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub forcing: Forcing,
    pub seed: u64,
    /// Stops after this many optimizer steps even mid-epoch.
    pub max_iterations: Option<usize>,
}

impl PretrainOptions {
    pub fn from_config(config: &TrainConfig) -> Self {
        Self {
            epochs: config.pretrain_epochs,
            batch_size: config.pretrain_batch,
            learning_rate: config.lr_pretrain,
            forcing: config.forcing,
            seed: config.component_seed("pretrain-actor"),
            max_iterations: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    /// Mean per-trajectory loss of each epoch, measured before each step.
    pub epoch_losses: Vec<f64>,
    pub iterations: usize,
}

/// Minimizes the negative log-likelihood of `corpus` with Adam.
pub fn pretrain_actor(actor: &mut Actor, env: &Env, corpus: &[Trajectory], opts: &PretrainOptions) -> Result<PretrainReport> {
    if corpus.is_empty() {
        return Err(Error::data("pretraining corpus is empty"));
    }
    if opts.batch_size == 0 {
        return Err(Error::config("batch size must be at least 1"));
    }
    for (i, t) in corpus.iter().enumerate() {
        t.validate(&env.net).map_err(|e| Error::data(format!("trajectory {i}: {e}")))?;
    }
    let adam = Adam::new(opts.learning_rate);
    let mut rng = rng::stream(opts.seed, "pretrain-order");
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut report = PretrainReport { epoch_losses: Vec::new(), iterations: 0 };
    'epochs: for _ in 0..opts.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(opts.batch_size) {
            if opts.max_iterations.is_some_and(|m| report.iterations >= m) {
                if seen > 0 {
                    report.epoch_losses.push(total / seen as f64);
                }
                break 'epochs;
            }
            for &i in chunk {
                let (loss, grads) = actor
                    .mll_gradients(env, &corpus[i], opts.forcing)
                    .map_err(|e| match e {
                        Error::Data(msg) => Error::data(format!("trajectory {i}: {msg}")),
                        other => other,
                    })?;
                actor.params_mut().accumulate(&grads);
                total += loss;
                seen += 1;
            }
            adam.step(actor.params_mut());
            report.iterations += 1;
        }
        report.epoch_losses.push(total / seen as f64);
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticPretrainOptions {
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Exploration of the frozen actor's rollouts; 0 gives greedy rollouts.
    pub epsilon: f64,
    pub delta: u32,
    /// Regress every legal action at every step onto its greedy-continuation
    /// return instead of only the sampled action onto its Monte-Carlo return.
    pub all_actions: bool,
    pub seed: u64,
}

impl CriticPretrainOptions {
    pub fn from_config(config: &TrainConfig) -> Self {
        Self {
            iterations: config.critic_pretrain_iters,
            batch_size: config.omega,
            learning_rate: config.lr_critic_pretrain.unwrap_or(config.lr_critic),
            epsilon: config.critic_pretrain_epsilon,
            delta: config.delta,
            all_actions: config.critic_pretrain_all_actions,
            seed: config.component_seed("pretrain-critic"),
        }
    }
}

/// Regresses the critic onto Monte-Carlo returns of rollouts from a frozen
/// actor. Returns the mean per-trajectory loss of every iteration.
pub fn pretrain_critic(critic: &mut Critic, actor: &Actor, env: &Env, source: &Source, opts: &CriticPretrainOptions) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&opts.epsilon) {
        return Err(Error::config(format!("epsilon must lie in [0, 1], got {}", opts.epsilon)));
    }
    let adam = Adam::new(opts.learning_rate);
    let mut rng = rng::stream(opts.seed, "critic-source");
    let mut explore = rng::stream(opts.seed, "critic-explore");
    let mut losses = Vec::with_capacity(opts.iterations);
    // Greedy rollouts of a frozen actor are deterministic, so their targets are reused.
    let mut cache: HashMap<Vec<VertexId>, (Vec<VertexId>, Vec<QTarget>)> = HashMap::new();
    for _ in 0..opts.iterations {
        let batch = source.batch(&env.net, opts.batch_size.max(1), &mut rng)?;
        let mut total = 0.0;
        for truth in &batch {
            let (loss, grads) = if opts.all_actions {
                let key = truth.vertices().to_vec();
                let (cells, targets) = match cache.get(&key) {
                    Some(hit) => hit.clone(),
                    None => {
                        let c = actor.encode(env, truth)?;
                        let rec = actor.reconstruct(env, &c, truth.first(), truth.len(), DecodeMode::EpsilonGreedy(opts.epsilon), &mut explore)?;
                        let targets = greedy_action_returns(actor, env, truth, &rec.cells, opts.delta)?;
                        if opts.epsilon == 0.0 {
                            cache.insert(key, (rec.cells.clone(), targets.clone()));
                        }
                        (rec.cells, targets)
                    }
                };
                critic.regression_gradients(env, truth, &cells[..cells.len() - 1], &targets)?
            } else {
                let c = actor.encode(env, truth)?;
                let rec = actor.reconstruct(env, &c, truth.first(), truth.len(), DecodeMode::EpsilonGreedy(opts.epsilon), &mut explore)?;
                let targets = monte_carlo_targets(&env.net, truth.vertices(), &rec.cells, opts.delta);
                critic.loss_gradients(env, truth, &rec.cells, &rec.actions, &targets)?
            };
            critic.params_mut().accumulate(&grads);
            total += loss;
        }
        adam.step(critic.params_mut());
        losses.push(total / batch.len() as f64);
    }
    Ok(losses)
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub iteration: usize,
    /// Total reward of the experience generated this iteration.
    pub reward: i64,
    pub epsilon: f64,
    /// Mean total reward over the sampled batch, once updates start.
    pub mean_reward: Option<f64>,
    pub critic_loss: Option<f64>,
    pub actor_loss: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Running,
    Converged,
}

/// Windowed moving average of the batch reward.
#[derive(Debug, Clone)]
struct Monitor {
    window: usize,
    threshold: f64,
    stable_needed: usize,
    worsening_limit: usize,
    sum: f64,
    count: usize,
    means: Vec<f64>,
    stable: usize,
    worsening: usize,
}

impl Monitor {
    fn new(config: &TrainConfig) -> Self {
        Self {
            window: config.convergence_window,
            threshold: config.convergence_threshold,
            stable_needed: config.convergence_windows,
            worsening_limit: config.divergence_windows,
            sum: 0.0,
            count: 0,
            means: Vec::new(),
            stable: 0,
            worsening: 0,
        }
    }

    fn feed(&mut self, value: f64) -> Result<Status> {
        self.sum += value;
        self.count += 1;
        if self.count < self.window {
            return Ok(Status::Running);
        }
        let mean = self.sum / self.count as f64;
        self.sum = 0.0;
        self.count = 0;
        if let Some(&prev) = self.means.last() {
            let change = if prev == mean { 0.0 } else { (mean - prev).abs() / prev.abs().max(1e-9) };
            self.stable = if change < self.threshold { self.stable + 1 } else { 0 };
            self.worsening = if mean < prev { self.worsening + 1 } else { 0 };
        }
        self.means.push(mean);
        if self.worsening >= self.worsening_limit {
            let tail = &self.means[self.means.len() - self.worsening - 1..];
            return Err(Error::Divergence(format!(
                "mean batch reward fell for {} consecutive windows of {} iterations: {:?}",
                self.worsening, self.window, tail
            )));
        }
        Ok(if self.stable >= self.stable_needed { Status::Converged } else { Status::Running })
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// The online or delayed actor, per `export_actor`.
    pub actor: Actor,
    pub critic: Critic,
    pub log: Vec<LogRecord>,
    pub converged: bool,
    pub iterations: usize,
}

/// Actor-critic state across iterations.
pub struct Trainer<'e> {
    env: &'e Env,
    config: TrainConfig,
    source: Source,
    actor: Actor,
    actor_target: Actor,
    critic: Critic,
    critic_target: Critic,
    replay: ReplayMemory,
    actor_adam: Adam,
    critic_adam: Adam,
    walk_rng: Rng,
    explore_rng: Rng,
    replay_rng: Rng,
    monitor: Monitor,
    iteration: usize,
}

struct BatchStats {
    mean_reward: f64,
    critic_loss: f64,
    actor_loss: f64,
}

impl<'e> Trainer<'e> {
    pub fn new(env: &'e Env, actor: Actor, critic: Critic, config: &TrainConfig, source: Source) -> Result<Self> {
        config.validate()?;
        if let Source::Corpus(items) = &source {
            if items.is_empty() {
                return Err(Error::data("training corpus is empty"));
            }
            for (i, t) in items.iter().enumerate() {
                if t.len() < 2 {
                    return Err(Error::data(format!("trajectory {i} is too short to train on")));
                }
                t.validate(&env.net).map_err(|e| Error::data(format!("trajectory {i}: {e}")))?;
            }
        }
        let seed = config.seed;
        Ok(Self {
            env,
            source,
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            replay: ReplayMemory::new(config.replay_capacity),
            actor_adam: Adam::new(config.lr_actor),
            critic_adam: Adam::new(config.lr_critic),
            walk_rng: rng::stream(seed, "train-walk"),
            explore_rng: rng::stream(seed, "train-explore"),
            replay_rng: rng::stream(seed, "train-replay"),
            monitor: Monitor::new(config),
            iteration: 0,
            config: config.clone(),
        })
    }

    pub fn actor(&self) -> &Actor {
        &self.actor
    }

    pub fn actor_target(&self) -> &Actor {
        &self.actor_target
    }

    pub fn critic(&self) -> &Critic {
        &self.critic
    }

    pub fn critic_target(&self) -> &Critic {
        &self.critic_target
    }

    pub fn replay(&self) -> &ReplayMemory {
        &self.replay
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Runs one iteration; returns its log line and whether the reward
    /// average has settled.
    pub fn step(&mut self) -> Result<(LogRecord, bool)> {
        let env = self.env;
        let epsilon = self.config.epsilon_at(self.iteration);
        let truth = self.source.sample(&env.net, &mut self.walk_rng)?;
        let c = self.actor_target.encode(env, &truth)?;
        let rec = self.actor_target.reconstruct(
            env,
            &c,
            truth.first(),
            truth.len(),
            DecodeMode::EpsilonGreedy(epsilon),
            &mut self.explore_rng,
        )?;
        let generated = total_reward(&env.net, truth.vertices(), &rec.cells, self.config.delta)?;
        self.replay.push(Experience::new(&env.net, truth, rec.actions)?);

        let mut record = LogRecord {
            iteration: self.iteration,
            reward: generated,
            epsilon,
            mean_reward: None,
            critic_loss: None,
            actor_loss: None,
        };
        let mut converged = false;
        if self.replay.len() >= self.config.omega {
            let stats = self.update()?;
            record.mean_reward = Some(stats.mean_reward);
            record.critic_loss = Some(stats.critic_loss);
            record.actor_loss = Some(stats.actor_loss);
            converged = self.monitor.feed(stats.mean_reward)? == Status::Converged;
        }
        soft_update(self.actor_target.params_mut(), self.actor.params(), self.config.gamma_phi)?;
        soft_update(self.critic_target.params_mut(), self.critic.params(), self.config.gamma_theta)?;
        self.iteration += 1;
        Ok((record, converged))
    }

    fn update(&mut self) -> Result<BatchStats> {
        let env = self.env;
        let delta = self.config.delta;
        let batch: Vec<Experience> = self
            .replay
            .sample(self.config.omega, &mut self.replay_rng)?
            .into_iter()
            .cloned()
            .collect();
        let mut stats = BatchStats { mean_reward: 0.0, critic_loss: 0.0, actor_loss: 0.0 };
        for exp in &batch {
            let truth = exp.truth();
            let x = truth.vertices();
            let recon = exp.recon();
            let steps = exp.actions().len();
            stats.mean_reward += total_reward(&env.net, x, recon, delta)? as f64;

            let (next_policy, next_q) = self.delayed_estimates(truth, &recon[..steps])?;
            let targets: Vec<f64> = (0..steps)
                .map(|t| {
                    let r = f64::from(reward(&env.net, x[t + 1], recon[t + 1], delta));
                    if t + 1 == steps {
                        bellman_target(r, &[0.0; Action::COUNT], &[0.0; Action::COUNT], true)
                    } else {
                        bellman_target(r, &next_policy[t + 1], &next_q[t + 1], false)
                    }
                })
                .collect();
            let (closs, cgrads) = self.critic.loss_gradients(env, truth, recon, exp.actions(), &targets)?;
            self.critic.params_mut().accumulate(&cgrads);
            stats.critic_loss += closs;

            // Ascent on the expected value: accumulate the negated gradient.
            let (value, agrads) = self.actor.expected_value_gradients(env, truth, &recon[..steps], &next_q)?;
            self.actor.params_mut().accumulate_scaled(&agrads, -1.0);
            stats.actor_loss -= value;
            if self.config.ll_weight > 0.0 {
                let (_, lgrads) = self.actor.mll_gradients(env, truth, Forcing::Teacher)?;
                self.actor.params_mut().accumulate_scaled(&lgrads, self.config.ll_weight);
            }
        }
        self.critic_adam.step(self.critic.params_mut());
        self.actor_adam.step(self.actor.params_mut());
        let n = batch.len() as f64;
        stats.mean_reward /= n;
        stats.critic_loss /= n;
        stats.actor_loss /= n;
        Ok(stats)
    }

    /// Delayed policy `p′` and values `Q′` at every prefix of `prefix`.
    fn delayed_estimates(&self, truth: &Trajectory, prefix: &[VertexId]) -> Result<(Vec<Policy>, Vec<QVector>)> {
        let env = self.env;
        let mut tape = Tape::no_grad();
        let actor = self.actor_target.bind(&mut tape, env)?;
        let c = actor.encode(&mut tape, truth.vertices())?;
        let mut state = actor.initial_state(&mut tape);
        let mut policies = Vec::with_capacity(prefix.len());
        for &cell in prefix {
            let (next, p) = actor.step(&mut tape, state, cell, c)?;
            state = next;
            let mut policy = [0.0; Action::COUNT];
            policy.copy_from_slice(tape.data(p));
            policies.push(policy);
        }
        let q = self.critic_target.q_sequence(env, truth, prefix)?;
        Ok((policies, q))
    }

    /// Iterates until convergence or `max_iters`, streaming JSON lines to `sink`.
    pub fn run(mut self, mut sink: Option<&mut dyn Write>) -> Result<TrainOutcome> {
        let mut log = Vec::with_capacity(self.config.max_iters);
        let mut converged = false;
        while self.iteration < self.config.max_iters {
            let (record, done) = self.step()?;
            if let Some(w) = sink.as_deref_mut() {
                writeln!(w, "{}", serde_json::to_string(&record)?)?;
            }
            if self.iteration % 100 == 0 {
                log::debug!("iteration {} reward {} mean {:?}", record.iteration, record.reward, record.mean_reward);
            }
            log.push(record);
            if done {
                converged = true;
                break;
            }
        }
        let actor = match self.config.export_actor {
            ExportActor::Online => self.actor,
            ExportActor::Delayed => self.actor_target,
        };
        Ok(TrainOutcome {
            iterations: self.iteration,
            actor,
            critic: self.critic,
            log,
            converged,
        })
    }
}

/// Runs the actor-critic loop from pretrained networks.
pub fn train(env: &Env, actor: Actor, critic: Critic, config: &TrainConfig, source: Source, sink: Option<&mut dyn Write>) -> Result<TrainOutcome> {
    Trainer::new(env, actor, critic, config, source)?.run(sink)
}

/// Outcome of critic pretraining followed by the actor-critic loop.
#[derive(Debug, Clone)]
pub struct Refinement {
    pub critic_pretrain_losses: Vec<f64>,
    pub outcome: TrainOutcome,
}

/// Builds a critic for `actor`, pretrains it on Monte-Carlo returns and runs
/// the actor-critic loop.
pub fn refine(env: &Env, actor: Actor, config: &TrainConfig, source: Source, sink: Option<&mut dyn Write>) -> Result<Refinement> {
    config.validate()?;
    let mut critic = Critic::new(env, config.critic_config(), config.component_seed("critic-init"))?;
    let critic_pretrain_losses = pretrain_critic(&mut critic, &actor, env, &source, &CriticPretrainOptions::from_config(config))?;
    let outcome = train(env, actor, critic, config, source, sink)?;
    Ok(Refinement { critic_pretrain_losses, outcome })
}

/// The full pipeline: likelihood pretraining on `corpus`, then [`refine`]
/// on the configured source.
pub fn fit(env: &Env, corpus: &[Trajectory], config: &TrainConfig, sink: Option<&mut dyn Write>) -> Result<(PretrainReport, Refinement)> {
    config.validate()?;
    let mut actor = Actor::new(env, config.actor_config(), config.component_seed("actor-init"))?;
    let report = pretrain_actor(&mut actor, env, corpus, &PretrainOptions::from_config(config))?;
    Ok((report, refine(env, actor, config, Source::from_config(config, corpus), sink)?))
}
