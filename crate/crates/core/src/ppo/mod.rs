//! Proximal policy optimization with generalized advantage estimation.

mod checkpoint;
pub mod nn;
mod policy;
mod rollout;
mod train;
mod update;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use policy::{gaussian_entropy, gaussian_log_prob, ObsNormalizer, Policy, RunningMeanStd};
pub use rollout::{
    compute_gae, normalize_advantages, Collector, Environment, EpisodeSummary, RolloutBuffer,
    Transition,
};
pub use train::{evaluate, run_episode, train, train_tag, EvalSummary, TrainReport, UpdateMetrics};
pub use update::{clipped_surrogate, loss_and_grad, ppo_update, LossStats, Minibatch, UpdateStats, Workspace};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    /// Steps per environment between updates.
    pub n_steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub n_epochs: usize,
    pub clip_range: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub total_timesteps: u64,
    pub n_envs: usize,
    pub hidden: Vec<usize>,
    pub log_std_init: f64,
    pub adam_eps: f64,
    pub normalize_obs: bool,
    pub normalize_reward: bool,
    /// Evaluate every this many updates (and after the last one).
    pub eval_interval: usize,
    pub eval_episodes: usize,
    /// Threads stepping environments during collection.
    pub workers: usize,
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            n_steps: 2048,
            batch_size: 128,
            learning_rate: 3e-4,
            gamma: 0.99,
            gae_lambda: 0.95,
            n_epochs: 10,
            clip_range: 0.2,
            entropy_coef: 0.0,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            total_timesteps: 3_000_000,
            n_envs: 16,
            hidden: vec![256, 256],
            log_std_init: 0.0,
            adam_eps: 1e-5,
            normalize_obs: true,
            normalize_reward: true,
            eval_interval: 5,
            eval_episodes: 20,
            workers: 1,
            seed: 0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_steps == 0 || self.n_envs == 0 || self.batch_size == 0 || self.n_epochs == 0 {
            return fail("n_steps, n_envs, batch_size and n_epochs must be positive");
        }
        if (self.n_steps * self.n_envs) % self.batch_size != 0 {
            return fail("n_steps * n_envs must be divisible by batch_size");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return fail("gamma must be in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return fail("gae_lambda must be in [0, 1]");
        }
        if !(self.learning_rate > 0.0 && self.clip_range > 0.0 && self.max_grad_norm > 0.0) {
            return fail("learning_rate, clip_range and max_grad_norm must be positive");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return fail("hidden layers must be non-empty and positive");
        }
        if self.eval_interval == 0 {
            return fail("eval_interval must be positive");
        }
        Ok(())
    }

    pub fn steps_per_update(&self) -> u64 {
        (self.n_steps * self.n_envs) as u64
    }

    /// Whole updates that fit in the budget (at least one).
    pub fn updates(&self) -> u64 {
        (self.total_timesteps / self.steps_per_update()).max(1)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PpoConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("ppo config serializes")
    }
}
