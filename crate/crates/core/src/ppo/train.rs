use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{EnvConfig, PolicyTag, QuadEnv};
use crate::error::{Error, Result};

use super::checkpoint::Checkpoint;
use super::nn::Adam;
use super::policy::Policy;
use super::rollout::{Collector, Environment, EpisodeSummary};
use super::update::{ppo_update, UpdateStats};
use super::PpoConfig;

const EVAL_SEED_SALT: u64 = 0x5eed_e7a1_0000_0000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateMetrics {
    pub update: usize,
    pub timesteps: u64,
    /// Mean return of episodes finished during this update's rollout, NaN if none.
    pub mean_return: f64,
    pub success_rate: f64,
    pub episodes: usize,
    pub clip_frac: f64,
    pub approx_kl: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub seconds: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalSummary {
    pub update: usize,
    pub timesteps: u64,
    pub episodes: usize,
    pub success_rate: f64,
    pub mean_return: f64,
    /// Mean episode duration in environment seconds.
    pub mean_time: f64,
}

#[derive(Clone, Debug, Default)]
pub struct TrainReport {
    pub updates: usize,
    pub timesteps: u64,
    pub metrics: Vec<UpdateMetrics>,
    pub evals: Vec<EvalSummary>,
    pub best: Option<EvalSummary>,
    pub best_path: Option<PathBuf>,
    pub last_path: Option<PathBuf>,
}

/// One episode with deterministic (mean) actions.
pub fn run_episode<E: Environment>(policy: &Policy, env: &mut E, seed: u64) -> Result<EpisodeSummary> {
    let mut obs = env.reset(seed)?;
    let mut ret = 0.0;
    let mut length = 0;
    loop {
        let a: Vec<f64> = policy.act_deterministic(&obs).iter().map(|x| x.clamp(-1.0, 1.0)).collect();
        let tr = env.step(&a)?;
        ret += tr.reward;
        length += 1;
        if tr.terminated || tr.truncated {
            return Ok(EpisodeSummary {
                ret,
                length,
                success: tr.success,
            });
        }
        obs = tr.obs;
    }
}

pub fn evaluate<E: Environment>(policy: &Policy, env: &mut E, seeds: &[u64]) -> Result<EvalSummary> {
    let mut s = EvalSummary {
        update: 0,
        timesteps: 0,
        episodes: seeds.len(),
        success_rate: 0.0,
        mean_return: 0.0,
        mean_time: 0.0,
    };
    if seeds.is_empty() {
        return Ok(s);
    }
    let n = seeds.len() as f64;
    for &seed in seeds {
        let ep = run_episode(policy, env, seed)?;
        s.success_rate += f64::from(u8::from(ep.success)) / n;
        s.mean_return += ep.ret / n;
        s.mean_time += ep.length as f64 * env.step_seconds() / n;
    }
    Ok(s)
}

fn fmt(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x}")
    }
}

struct Outputs<'a> {
    dir: &'a Path,
    metrics: String,
    evals: String,
}

impl<'a> Outputs<'a> {
    fn new(dir: &'a Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            dir,
            metrics: "update,timesteps,mean_return,success_rate,clip_frac,approx_kl\n".into(),
            evals: "update,timesteps,success_rate,mean_return,mean_time\n".into(),
        })
    }

    fn write(&self, name: &str, text: &str) -> Result<()> {
        let p = self.dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    }

    fn flush(&self) -> Result<()> {
        self.write("metrics.csv", &self.metrics)?;
        self.write("eval.csv", &self.evals)
    }
}

/// Alternates rollout collection and PPO updates until the timestep budget is
/// spent. `make_env(seed)` builds one environment; training environments get
/// seeds from `cfg.seed`, evaluation uses a fixed seed list. With `out_dir`,
/// writes `best.json`, `last.json`, `metrics.csv` and `eval.csv` there.
pub fn train<E, F>(
    cfg: &PpoConfig,
    make_env: F,
    tag: Option<PolicyTag>,
    env_config: Option<&EnvConfig>,
    out_dir: Option<&Path>,
    mut progress: impl FnMut(&UpdateMetrics, Option<&EvalSummary>),
) -> Result<(Policy, TrainReport)>
where
    E: Environment,
    F: Fn(u64) -> Result<E>,
{
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let seeds: Vec<u64> = (0..cfg.n_envs).map(|_| rng.next_u64()).collect();
    let envs = seeds.iter().map(|&s| make_env(s)).collect::<Result<Vec<E>>>()?;
    let (obs_dim, act_dim, layout) = (envs[0].obs_dim(), envs[0].act_dim(), envs[0].layout_hash());
    let mut collector = Collector::new(envs, &seeds, cfg.gamma, cfg.normalize_reward)?;
    collector.workers = cfg.workers;

    let mut eval_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ EVAL_SEED_SALT);
    let eval_seeds: Vec<u64> = (0..cfg.eval_episodes).map(|_| eval_rng.next_u64()).collect();
    let mut eval_env = make_env(eval_rng.next_u64())?;

    let mut policy = Policy::new(obs_dim, act_dim, &cfg.hidden, cfg.log_std_init, cfg.normalize_obs, &mut rng);
    let mut opt = Adam::new(policy.params.len(), cfg.learning_rate, cfg.adam_eps);
    let mut outputs = out_dir.map(Outputs::new).transpose()?;
    let mut report = TrainReport::default();
    let checkpoint = |p: &Policy, steps: u64, success: Option<f64>| {
        Checkpoint::from_policy(p, layout, tag, env_config.cloned(), cfg.clone(), steps, success)
    };

    let total_updates = cfg.updates() as usize;
    for update in 1..=total_updates {
        let t0 = Instant::now();
        let (mut buf, episodes) = collector.collect(&mut policy, cfg.n_steps, &mut rng)?;
        buf.compute_advantages(cfg.gamma, cfg.gae_lambda)?;
        let stats = match ppo_update(&mut policy, &mut opt, &buf, cfg, &mut rng) {
            Ok(s) => s,
            Err(e) => {
                if let Some(o) = &outputs {
                    let _ = o.flush();
                    let _ = o.write("diagnostic.txt", &diagnostic(update, &report, &e, &buf.rewards, &buf.values));
                }
                return Err(e);
            }
        };
        report.timesteps += buf.len() as u64;
        report.updates = update;
        let m = metrics_row(update, report.timesteps, &episodes, &stats, t0.elapsed().as_secs_f64());

        let mut eval = None;
        if update % cfg.eval_interval == 0 || update == total_updates {
            let mut e = evaluate(&policy, &mut eval_env, &eval_seeds)?;
            e.update = update;
            e.timesteps = report.timesteps;
            let better = report
                .best
                .is_none_or(|b| (e.success_rate, e.mean_return) > (b.success_rate, b.mean_return));
            if better {
                report.best = Some(e);
                if let Some(o) = &outputs {
                    let p = o.dir.join("best.json");
                    checkpoint(&policy, report.timesteps, Some(e.success_rate)).save(&p)?;
                    report.best_path = Some(p);
                }
            }
            if let Some(o) = &mut outputs {
                let _ = writeln!(
                    o.evals,
                    "{},{},{},{},{}",
                    e.update, e.timesteps, e.success_rate, e.mean_return, e.mean_time
                );
            }
            report.evals.push(e);
            eval = Some(e);
        }
        if let Some(o) = &mut outputs {
            let _ = writeln!(
                o.metrics,
                "{},{},{},{},{},{}",
                m.update,
                m.timesteps,
                fmt(m.mean_return),
                fmt(m.success_rate),
                m.clip_frac,
                m.approx_kl
            );
            o.flush()?;
        }
        progress(&m, eval.as_ref());
        report.metrics.push(m);
    }
    if let Some(o) = &outputs {
        let p = o.dir.join("last.json");
        let success = report.evals.last().map(|e| e.success_rate);
        checkpoint(&policy, report.timesteps, success).save(&p)?;
        report.last_path = Some(p);
    }
    Ok((policy, report))
}

fn metrics_row(update: usize, timesteps: u64, episodes: &[EpisodeSummary], s: &UpdateStats, seconds: f64) -> UpdateMetrics {
    let n = episodes.len() as f64;
    let (mean_return, success_rate) = if episodes.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        (
            episodes.iter().map(|e| e.ret).sum::<f64>() / n,
            episodes.iter().filter(|e| e.success).count() as f64 / n,
        )
    };
    UpdateMetrics {
        update,
        timesteps,
        mean_return,
        success_rate,
        episodes: episodes.len(),
        clip_frac: s.clip_frac,
        approx_kl: s.approx_kl,
        value_loss: s.value_loss,
        entropy: s.entropy,
        seconds,
    }
}

fn diagnostic(update: usize, report: &TrainReport, err: &Error, rewards: &[f64], values: &[f64]) -> String {
    let range = |v: &[f64]| {
        let finite: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
        let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        format!("[{lo}, {hi}], {} non-finite", v.len() - finite.len())
    };
    let mut s = format!("training halted at update {update}: {err}\n");
    let _ = writeln!(s, "timesteps before this update: {}", report.timesteps);
    let _ = writeln!(s, "buffer rewards: {}", range(rewards));
    let _ = writeln!(s, "buffer values: {}", range(values));
    if let Some(m) = report.metrics.last() {
        let _ = writeln!(s, "previous update: {m:?}");
    }
    s
}

/// Trains one policy on randomized scenes of the given tag.
pub fn train_tag(
    tag: PolicyTag,
    env_cfg: &EnvConfig,
    cfg: &PpoConfig,
    out_dir: Option<&Path>,
    progress: impl FnMut(&UpdateMetrics, Option<&EvalSummary>),
) -> Result<(Policy, TrainReport)> {
    env_cfg.validate()?;
    let make = |seed| QuadEnv::new(env_cfg.clone(), seed);
    train(cfg, make, Some(tag), Some(env_cfg), out_dir, progress)
}
