use crate::actor::{ActorConfig, Forcing, OutputHead};
use crate::critic::CriticConfig;
use crate::embed::EmbedConfig;
use crate::error::{Error, Result};
use crate::rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Where the actor-critic loop draws ground-truth trajectories from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainSource {
    #[default]
    RandomWalk,
    /// The likelihood-pretraining corpus.
    Corpus,
}

/// Which actor the actor-critic loop hands back.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExportActor {
    #[default]
    Online,
    /// The soft-updated delayed copy.
    Delayed,
}

/// Every tunable of the pipeline. Unknown JSON keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Grid cell size in meters.
    pub alpha: f64,
    pub repr_dim: usize,
    pub decoder_hidden: Option<usize>,
    pub finetune_embeddings: bool,
    pub critic_hidden: usize,
    pub critic_state_dim: usize,
    pub critic_action_penalty: f64,
    /// Tolerated hop distance per step.
    pub delta: u32,
    pub epsilon: f64,
    /// When set, exploration decays linearly from `epsilon` to this value
    /// over `max_iters`.
    pub epsilon_final: Option<f64>,
    pub omega: usize,
    pub replay_capacity: usize,
    pub gamma_phi: f64,
    pub gamma_theta: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    /// Weight of the ground-truth negative log-likelihood kept in the actor
    /// loss during the actor-critic loop.
    pub ll_weight: f64,
    pub train_source: TrainSource,
    pub export_actor: ExportActor,
    pub walk_min: usize,
    pub walk_max: usize,
    pub max_iters: usize,
    pub convergence_window: usize,
    pub convergence_threshold: f64,
    pub convergence_windows: usize,
    pub divergence_windows: usize,
    pub pretrain_epochs: usize,
    pub pretrain_batch: usize,
    pub lr_pretrain: f64,
    pub forcing: Forcing,
    pub critic_pretrain_iters: usize,
    pub critic_pretrain_epsilon: f64,
    pub critic_pretrain_all_actions: bool,
    /// Critic pretraining learning rate; `lr_critic` when unset.
    pub lr_critic_pretrain: Option<f64>,
    pub embed: EmbedConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 3.0,
            repr_dim: 64,
            decoder_hidden: None,
            finetune_embeddings: false,
            critic_hidden: 512,
            critic_state_dim: 64,
            critic_action_penalty: 0.0,
            delta: 3,
            epsilon: 0.1,
            epsilon_final: None,
            omega: 16,
            replay_capacity: 10_000,
            gamma_phi: 0.001,
            gamma_theta: 0.001,
            lr_actor: 1e-4,
            lr_critic: 1e-3,
            ll_weight: 0.0,
            train_source: TrainSource::RandomWalk,
            export_actor: ExportActor::Online,
            walk_min: 10,
            walk_max: 40,
            max_iters: 5_000,
            convergence_window: 200,
            convergence_threshold: 0.01,
            convergence_windows: 3,
            divergence_windows: 10,
            pretrain_epochs: 100,
            pretrain_batch: 16,
            lr_pretrain: 1e-3,
            forcing: Forcing::Teacher,
            critic_pretrain_iters: 500,
            critic_pretrain_epsilon: 0.1,
            critic_pretrain_all_actions: false,
            lr_critic_pretrain: None,
            embed: EmbedConfig::default(),
            seed: 0,
        }
    }
}

fn unit_interval(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::config(format!("{name} must lie in [0, 1], got {v}")));
    }
    Ok(())
}

fn positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::config(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

impl TrainConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        positive("alpha", self.alpha)?;
        self.actor_config().validate()?;
        self.critic_config().validate()?;
        unit_interval("epsilon", self.epsilon)?;
        if let Some(e) = self.epsilon_final {
            unit_interval("epsilon_final", e)?;
        }
        unit_interval("critic_pretrain_epsilon", self.critic_pretrain_epsilon)?;
        for (name, g) in [("gamma_phi", self.gamma_phi), ("gamma_theta", self.gamma_theta)] {
            if !(g > 0.0 && g <= 1.0) {
                return Err(Error::config(format!("{name} must lie in (0, 1], got {g}")));
            }
        }
        positive("lr_actor", self.lr_actor)?;
        positive("lr_critic", self.lr_critic)?;
        positive("lr_pretrain", self.lr_pretrain)?;
        if let Some(lr) = self.lr_critic_pretrain {
            positive("lr_critic_pretrain", lr)?;
        }
        if !(self.ll_weight >= 0.0 && self.ll_weight.is_finite()) {
            return Err(Error::config(format!("ll_weight must be finite and non-negative, got {}", self.ll_weight)));
        }
        positive("convergence_threshold", self.convergence_threshold)?;
        if self.omega == 0 {
            return Err(Error::config("omega must be at least 1"));
        }
        if self.replay_capacity < self.omega {
            return Err(Error::config("replay_capacity must be at least omega"));
        }
        if self.walk_min < 2 || self.walk_min > self.walk_max {
            return Err(Error::config(format!(
                "walk lengths need 2 <= walk_min <= walk_max, got {}..{}",
                self.walk_min, self.walk_max
            )));
        }
        if self.convergence_window == 0 || self.convergence_windows == 0 || self.divergence_windows == 0 {
            return Err(Error::config("convergence and divergence windows must be positive"));
        }
        if self.pretrain_batch == 0 {
            return Err(Error::config("pretrain_batch must be at least 1"));
        }
        if self.embed.dim == 0 || self.embed.walk_length == 0 {
            return Err(Error::config("embedding dim and walk length must be positive"));
        }
        Ok(())
    }

    pub fn actor_config(&self) -> ActorConfig {
        ActorConfig {
            repr_dim: self.repr_dim,
            decoder_hidden: self.decoder_hidden,
            finetune_embeddings: self.finetune_embeddings,
            head: OutputHead::Actions,
        }
    }

    pub fn critic_config(&self) -> CriticConfig {
        CriticConfig { hidden: self.critic_hidden, state_dim: self.critic_state_dim, action_penalty: self.critic_action_penalty }
    }

    pub fn embed_config(&self) -> EmbedConfig {
        EmbedConfig { seed: self.component_seed("embed"), ..self.embed }
    }

    /// Seed for one named component, derived from the root seed.
    pub fn component_seed(&self, label: &str) -> u64 {
        rng::derive(self.seed, label)
    }

    /// Exploration rate at `iteration`.
    pub fn epsilon_at(&self, iteration: usize) -> f64 {
        match self.epsilon_final {
            None => self.epsilon,
            Some(end) => {
                let frac = (iteration as f64 / self.max_iters.max(1) as f64).min(1.0);
                self.epsilon + (end - self.epsilon) * frac
            }
        }
    }
}
