use rand::Rng;
use serde::{Deserialize, Serialize};

use super::nn::{forward, init_orthogonal, MlpCache, MlpShape};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Log density of a diagonal Gaussian.
pub fn gaussian_log_prob(a: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    a.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((a, m), ls)| {
            let z = (a - m) / ls.exp();
            -0.5 * z * z - ls - 0.5 * LN_2PI
        })
        .sum()
}

/// Differential entropy of a diagonal Gaussian.
pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|ls| 0.5 + 0.5 * LN_2PI + ls).sum()
}

/// Streaming mean/variance (population) merged batch by batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunningMeanStd {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: f64,
}

impl RunningMeanStd {
    pub fn new(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            var: vec![0.0; dim],
            count: 0.0,
        }
    }

    /// Merges `rows` samples stored row-major in `x`.
    pub fn update(&mut self, x: &[f64], rows: usize) {
        let dim = self.mean.len();
        assert_eq!(x.len(), rows * dim);
        if rows == 0 {
            return;
        }
        let n = rows as f64;
        for j in 0..dim {
            let col = x.iter().skip(j).step_by(dim);
            let bm = col.clone().sum::<f64>() / n;
            let bv = col.map(|v| (v - bm) * (v - bm)).sum::<f64>() / n;
            if self.count == 0.0 {
                self.mean[j] = bm;
                self.var[j] = bv;
                continue;
            }
            let tot = self.count + n;
            let delta = bm - self.mean[j];
            self.mean[j] += delta * n / tot;
            let m2 = self.var[j] * self.count + bv * n + delta * delta * self.count * n / tot;
            self.var[j] = m2 / tot;
        }
        self.count += n;
    }
}

/// Observation standardization. Entries that never varied during training
/// map to 0 so they cannot drive weights that were never trained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObsNormalizer {
    pub enabled: bool,
    pub clip: f64,
    pub eps: f64,
    pub stats: RunningMeanStd,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl ObsNormalizer {
    pub fn new(dim: usize, enabled: bool) -> Self {
        Self {
            enabled,
            clip: 10.0,
            eps: 1e-8,
            stats: RunningMeanStd::new(dim),
            min: vec![f64::INFINITY; dim],
            max: vec![f64::NEG_INFINITY; dim],
        }
    }

    pub fn update(&mut self, x: &[f64], rows: usize) {
        if !self.enabled {
            return;
        }
        self.stats.update(x, rows);
        let dim = self.min.len();
        for row in x.chunks_exact(dim) {
            for j in 0..dim {
                self.min[j] = self.min[j].min(row[j]);
                self.max[j] = self.max[j].max(row[j]);
            }
        }
    }

    pub fn normalize_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        if !self.enabled {
            out.extend_from_slice(x);
            return;
        }
        let dim = self.min.len();
        for row in x.chunks_exact(dim) {
            for j in 0..dim {
                let v = if self.max[j] > self.min[j] {
                    let s = (self.stats.var[j] + self.eps).sqrt();
                    ((row[j] - self.stats.mean[j]) / s).clamp(-self.clip, self.clip)
                } else {
                    0.0
                };
                out.push(v);
            }
        }
    }
}

/// Diagonal-Gaussian actor and scalar critic sharing one flat parameter vector:
/// actor weights, critic weights, then the action log-std.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub hidden: Vec<usize>,
    pub params: Vec<f64>,
    pub obs_norm: ObsNormalizer,
    actor: MlpShape,
    critic: MlpShape,
    log_std_off: usize,
}

impl Policy {
    /// Orthogonal init: hidden gain √2, action head 0.01, value head 1.
    pub fn new(obs_dim: usize, act_dim: usize, hidden: &[usize], log_std_init: f64, normalize_obs: bool, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeroed(obs_dim, act_dim, hidden, normalize_obs);
        let mut gains = vec![2f64.sqrt(); hidden.len()];
        gains.push(0.01);
        init_orthogonal(&mut p.params, &p.actor, &gains, rng);
        *gains.last_mut().unwrap() = 1.0;
        init_orthogonal(&mut p.params, &p.critic, &gains, rng);
        let off = p.log_std_off;
        p.params[off..off + act_dim].iter_mut().for_each(|v| *v = log_std_init);
        p
    }

    /// Same architecture with all parameters zero.
    pub fn zeroed(obs_dim: usize, act_dim: usize, hidden: &[usize], normalize_obs: bool) -> Self {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        let mut a = sizes.clone();
        a.push(act_dim);
        let mut c = sizes;
        c.push(1);
        let actor = MlpShape::new(a, 0);
        let critic = MlpShape::new(c, actor.end());
        let log_std_off = critic.end();
        Self {
            obs_dim,
            act_dim,
            hidden: hidden.to_vec(),
            params: vec![0.0; log_std_off + act_dim],
            obs_norm: ObsNormalizer::new(obs_dim, normalize_obs),
            actor,
            critic,
            log_std_off,
        }
    }

    pub fn actor_shape(&self) -> &MlpShape {
        &self.actor
    }

    pub fn critic_shape(&self) -> &MlpShape {
        &self.critic
    }

    pub fn log_std_offset(&self) -> usize {
        self.log_std_off
    }

    pub fn log_std(&self) -> &[f64] {
        &self.params[self.log_std_off..self.log_std_off + self.act_dim]
    }

    /// Action means for a batch of already-normalized observations.
    pub fn actor_forward(&self, obs: &[f64], batch: usize, cache: &mut MlpCache) {
        forward(&self.params, &self.actor, obs, batch, cache);
    }

    pub fn critic_forward(&self, obs: &[f64], batch: usize, cache: &mut MlpCache) {
        forward(&self.params, &self.critic, obs, batch, cache);
    }

    /// Deterministic action for one raw observation.
    pub fn act_deterministic(&self, raw_obs: &[f64]) -> Vec<f64> {
        let mut norm = Vec::with_capacity(self.obs_dim);
        self.obs_norm.normalize_into(raw_obs, &mut norm);
        let mut cache = MlpCache::default();
        self.actor_forward(&norm, 1, &mut cache);
        cache.output().to_vec()
    }

    /// Value estimate for one raw observation.
    pub fn value(&self, raw_obs: &[f64]) -> f64 {
        let mut norm = Vec::with_capacity(self.obs_dim);
        self.obs_norm.normalize_into(raw_obs, &mut norm);
        let mut cache = MlpCache::default();
        self.critic_forward(&norm, 1, &mut cache);
        cache.output()[0]
    }
}
