use rand::Rng;
use rand_distr::StandardNormal;

use crate::env::{layout_hash, QuadEnv, ACTION_DIM, OBS_DIM};
use crate::error::{Error, Result};

use super::nn::MlpCache;
use super::policy::{gaussian_log_prob, Policy, RunningMeanStd};

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    /// Episode ended by completing its task.
    pub success: bool,
}

/// Episodic environment with continuous actions in `[-1, 1]^act_dim`.
pub trait Environment: Send {
    fn obs_dim(&self) -> usize;
    fn act_dim(&self) -> usize;
    /// Identifies the observation layout; checkpoints refuse other layouts.
    fn layout_hash(&self) -> u64;
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>>;
    /// Starts the next episode from the environment's own seed stream.
    fn reset_next(&mut self) -> Result<Vec<f64>>;
    fn step(&mut self, action: &[f64]) -> Result<Transition>;
    /// Seconds per step, used to report episode durations.
    fn step_seconds(&self) -> f64 {
        1.0
    }
}

impl Environment for QuadEnv {
    fn obs_dim(&self) -> usize {
        OBS_DIM
    }

    fn act_dim(&self) -> usize {
        ACTION_DIM
    }

    fn layout_hash(&self) -> u64 {
        layout_hash()
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        Ok(QuadEnv::reset(self, seed)?.0.to_vec())
    }

    fn reset_next(&mut self) -> Result<Vec<f64>> {
        Ok(QuadEnv::reset_next(self)?.0.to_vec())
    }

    fn step(&mut self, action: &[f64]) -> Result<Transition> {
        let r = self.step_action(action)?;
        Ok(Transition {
            obs: r.obs.0.to_vec(),
            reward: r.reward,
            terminated: r.terminated,
            truncated: r.truncated,
            success: r.info.finished,
        })
    }

    fn step_seconds(&self) -> f64 {
        self.config().dt
    }
}

/// Generalized advantage estimates for one trajectory segment. `dones[t]`
/// marks that the episode ended after step `t`; `last_value` bootstraps the
/// step after the segment.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_value: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(Error::InvalidParam(format!(
            "GAE inputs disagree in length: {} rewards, {} values, {} flags",
            n,
            values.len(),
            dones.len()
        )));
    }
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let next_value = if t + 1 < n { values[t + 1] } else { last_value };
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// Shifts and scales to zero mean and unit (population) deviation.
pub fn normalize_advantages(adv: &mut [f64]) {
    let n = adv.len() as f64;
    if adv.len() < 2 {
        adv.iter_mut().for_each(|a| *a = 0.0);
        return;
    }
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let s = (var + 1e-12).sqrt();
    adv.iter_mut().for_each(|a| *a = (*a - mean) / s);
}

/// Transitions of `n_envs` environments over `n_steps`, stored step-major
/// (`index = t·n_envs + env`).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RolloutBuffer {
    pub n_steps: usize,
    pub n_envs: usize,
    pub obs_dim: usize,
    pub act_dim: usize,
    /// Normalized observations as seen by the policy.
    pub obs: Vec<f64>,
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    /// Rewards after scaling and truncation bootstrap.
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub last_values: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.n_steps * self.n_envs
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Fills `advantages` and `returns`, one environment column at a time.
    pub fn compute_advantages(&mut self, gamma: f64, lambda: f64) -> Result<()> {
        let (t_n, e_n) = (self.n_steps, self.n_envs);
        self.advantages = vec![0.0; t_n * e_n];
        self.returns = vec![0.0; t_n * e_n];
        for e in 0..e_n {
            let col = |v: &Vec<f64>| (0..t_n).map(|t| v[t * e_n + e]).collect::<Vec<f64>>();
            let dones: Vec<bool> = (0..t_n).map(|t| self.dones[t * e_n + e]).collect();
            let (adv, ret) = compute_gae(&col(&self.rewards), &col(&self.values), &dones, self.last_values[e], gamma, lambda)?;
            for t in 0..t_n {
                self.advantages[t * e_n + e] = adv[t];
                self.returns[t * e_n + e] = ret[t];
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeSummary {
    /// Sum of unscaled environment rewards.
    pub ret: f64,
    pub length: usize,
    pub success: bool,
}

/// Steps a set of environments with a stochastic policy, keeping episode
/// state across calls and resetting finished episodes automatically.
pub struct Collector<E: Environment> {
    pub envs: Vec<E>,
    obs: Vec<Vec<f64>>,
    running_return: Vec<f64>,
    episode_return: Vec<f64>,
    episode_len: Vec<usize>,
    pub reward_stats: Option<RunningMeanStd>,
    pub gamma: f64,
    pub workers: usize,
}

const REWARD_CLIP: f64 = 10.0;

impl<E: Environment> Collector<E> {
    /// Takes freshly constructed environments and resets them with `seeds`.
    pub fn new(mut envs: Vec<E>, seeds: &[u64], gamma: f64, normalize_reward: bool) -> Result<Self> {
        if envs.is_empty() || envs.len() != seeds.len() {
            return Err(Error::InvalidParam("need one seed per environment and at least one environment".into()));
        }
        let obs = envs
            .iter_mut()
            .zip(seeds)
            .enumerate()
            .map(|(i, (e, s))| e.reset(*s).map_err(|err| env_err(i, err)))
            .collect::<Result<Vec<_>>>()?;
        let n = envs.len();
        Ok(Self {
            envs,
            obs,
            running_return: vec![0.0; n],
            episode_return: vec![0.0; n],
            episode_len: vec![0; n],
            reward_stats: normalize_reward.then(|| RunningMeanStd::new(1)),
            gamma,
            workers: 1,
        })
    }

    pub fn current_obs(&self) -> &[Vec<f64>] {
        &self.obs
    }

    fn step_all(&mut self, actions: &[Vec<f64>]) -> Vec<Result<Transition>> {
        let workers = self.workers.clamp(1, self.envs.len());
        if workers == 1 {
            return self.envs.iter_mut().zip(actions).map(|(e, a)| e.step(a)).collect();
        }
        let chunk = self.envs.len().div_ceil(workers);
        std::thread::scope(|s| {
            let handles: Vec<_> = self
                .envs
                .chunks_mut(chunk)
                .zip(actions.chunks(chunk))
                .map(|(envs, acts)| {
                    s.spawn(move || envs.iter_mut().zip(acts).map(|(e, a)| e.step(a)).collect::<Vec<_>>())
                })
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("env worker panicked")).collect()
        })
    }

    /// Runs `n_steps` steps in every environment. The policy's observation
    /// statistics are updated as observations arrive.
    pub fn collect(
        &mut self,
        policy: &mut Policy,
        n_steps: usize,
        rng: &mut impl Rng,
    ) -> Result<(RolloutBuffer, Vec<EpisodeSummary>)> {
        let n_envs = self.envs.len();
        let (od, ad) = (policy.obs_dim, policy.act_dim);
        let mut buf = RolloutBuffer {
            n_steps,
            n_envs,
            obs_dim: od,
            act_dim: ad,
            ..Default::default()
        };
        buf.obs.reserve(n_steps * n_envs * od);
        let mut episodes = Vec::new();
        let mut actor = MlpCache::default();
        let mut critic = MlpCache::default();
        let mut raw = Vec::with_capacity(n_envs * od);
        let mut norm = Vec::new();
        let log_std = policy.log_std().to_vec();
        let std: Vec<f64> = log_std.iter().map(|l| l.exp()).collect();

        if policy.obs_norm.stats.count == 0.0 {
            raw.clear();
            self.obs.iter().for_each(|o| raw.extend_from_slice(o));
            policy.obs_norm.update(&raw, n_envs);
        }
        for _ in 0..n_steps {
            raw.clear();
            self.obs.iter().for_each(|o| raw.extend_from_slice(o));
            policy.obs_norm.normalize_into(&raw, &mut norm);
            policy.actor_forward(&norm, n_envs, &mut actor);
            policy.critic_forward(&norm, n_envs, &mut critic);
            let means = actor.output();
            let mut actions = Vec::with_capacity(n_envs);
            for e in 0..n_envs {
                let mu = &means[e * ad..(e + 1) * ad];
                let a: Vec<f64> = mu
                    .iter()
                    .zip(&std)
                    .map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                buf.log_probs.push(gaussian_log_prob(&a, mu, &log_std));
                buf.actions.extend_from_slice(&a);
                actions.push(a.iter().map(|x| x.clamp(-1.0, 1.0)).collect::<Vec<f64>>());
            }
            buf.obs.extend_from_slice(&norm);
            buf.values.extend_from_slice(critic.output());

            let results = self.step_all(&actions);
            let mut terminal_obs: Vec<(usize, Vec<f64>)> = Vec::new();
            let mut step_rewards = vec![0.0; n_envs];
            for (e, r) in results.into_iter().enumerate() {
                let tr = r.map_err(|err| env_err(e, err))?;
                if !tr.reward.is_finite() {
                    return Err(env_err(e, Error::NonFinite(format!("reward {}", tr.reward))));
                }
                self.episode_return[e] += tr.reward;
                self.episode_len[e] += 1;
                let done = tr.terminated || tr.truncated;
                step_rewards[e] = tr.reward;
                if tr.truncated && !tr.terminated {
                    terminal_obs.push((e, tr.obs.clone()));
                }
                buf.dones.push(done);
                if done {
                    episodes.push(EpisodeSummary {
                        ret: self.episode_return[e],
                        length: self.episode_len[e],
                        success: tr.success,
                    });
                    self.episode_return[e] = 0.0;
                    self.episode_len[e] = 0;
                    self.obs[e] = self.envs[e].reset_next().map_err(|err| env_err(e, err))?;
                } else {
                    self.obs[e] = tr.obs;
                }
            }
            let scaled = self.scale_rewards(&step_rewards, &buf.dones[buf.dones.len() - n_envs..]);
            let base = buf.rewards.len();
            buf.rewards.extend_from_slice(&scaled);
            // time-limit truncation: bootstrap from the value of the final observation
            for (e, o) in terminal_obs {
                let mut n = Vec::new();
                policy.obs_norm.normalize_into(&o, &mut n);
                let mut c = MlpCache::default();
                policy.critic_forward(&n, 1, &mut c);
                buf.rewards[base + e] += self.gamma * c.output()[0];
            }
            raw.clear();
            self.obs.iter().for_each(|o| raw.extend_from_slice(o));
            policy.obs_norm.update(&raw, n_envs);
        }
        raw.clear();
        self.obs.iter().for_each(|o| raw.extend_from_slice(o));
        policy.obs_norm.normalize_into(&raw, &mut norm);
        policy.critic_forward(&norm, n_envs, &mut critic);
        buf.last_values = critic.output().to_vec();
        Ok((buf, episodes))
    }

    fn scale_rewards(&mut self, rewards: &[f64], dones: &[bool]) -> Vec<f64> {
        let Some(stats) = self.reward_stats.as_mut() else {
            return rewards.to_vec();
        };
        for (ret, r) in self.running_return.iter_mut().zip(rewards) {
            *ret = *ret * self.gamma + r;
        }
        stats.update(&self.running_return, rewards.len());
        let s = (stats.var[0] + 1e-8).sqrt();
        for (ret, d) in self.running_return.iter_mut().zip(dones) {
            if *d {
                *ret = 0.0;
            }
        }
        rewards.iter().map(|r| (r / s).clamp(-REWARD_CLIP, REWARD_CLIP)).collect()
    }
}

fn env_err(index: usize, source: Error) -> Error {
    Error::Env {
        index,
        source: Box::new(source),
    }
}
