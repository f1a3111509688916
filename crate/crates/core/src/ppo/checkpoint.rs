use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, PolicyTag};
use crate::error::{Error, Result};

use super::policy::{ObsNormalizer, Policy};
use super::PpoConfig;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to rebuild a trained policy, stored as JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub tag: Option<PolicyTag>,
    pub layout_hash: u64,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub hidden: Vec<usize>,
    pub params: Vec<f64>,
    pub obs_norm: ObsNormalizer,
    pub env_config: Option<EnvConfig>,
    pub ppo_config: PpoConfig,
    pub timesteps: u64,
    pub eval_success: Option<f64>,
}

impl Checkpoint {
    pub fn from_policy(
        policy: &Policy,
        layout_hash: u64,
        tag: Option<PolicyTag>,
        env_config: Option<EnvConfig>,
        ppo_config: PpoConfig,
        timesteps: u64,
        eval_success: Option<f64>,
    ) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            tag,
            layout_hash,
            obs_dim: policy.obs_dim,
            act_dim: policy.act_dim,
            hidden: policy.hidden.clone(),
            params: policy.params.clone(),
            obs_norm: policy.obs_norm.clone(),
            env_config,
            ppo_config,
            timesteps,
            eval_success,
        }
    }

    pub fn policy(&self) -> Result<Policy> {
        let mut p = Policy::zeroed(self.obs_dim, self.act_dim, &self.hidden, self.obs_norm.enabled);
        if p.params.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "parameter count {} does not match the stored architecture ({})",
                self.params.len(),
                p.params.len()
            )));
        }
        if self.obs_norm.min.len() != self.obs_dim || self.obs_norm.stats.mean.len() != self.obs_dim {
            return Err(Error::Checkpoint("normalizer size does not match obs_dim".into()));
        }
        p.params.copy_from_slice(&self.params);
        p.obs_norm = self.obs_norm.clone();
        Ok(p)
    }

    /// Rejects checkpoints trained on a different observation layout.
    pub fn check_layout(&self, layout_hash: u64, obs_dim: usize) -> Result<()> {
        if self.layout_hash != layout_hash || self.obs_dim != obs_dim {
            return Err(Error::LayoutMismatch {
                expected: format!("{obs_dim} inputs, layout {layout_hash:016x}"),
                found: format!("{} inputs, layout {:016x}", self.obs_dim, self.layout_hash),
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if c.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                c.version
            )));
        }
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
