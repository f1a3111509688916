//! Episodic flight environment around the control-point chain.

mod config;
mod observe;
mod reward;
mod scene;

use std::collections::VecDeque;
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use config::{EnvConfig, PolicyTag, SceneRandomization};
pub use observe::{
    esdf_ring_observe, in_fov, kgp_observe, layout_hash, layout_offset, march, observe,
    observed_targets, select_policy_model, KgpObservation, Observation, ACTION_DIM,
    DEFAULT_CLEARANCE, KGP_HALF_ANGLE, KGP_MIN_SPEED, KGP_RAYS, OBS_DIM, OBS_LAYOUT,
    SDF_RING_RADIUS,
};
pub use reward::{
    column_entry, column_overlap, compute_reward, dynamic_violations, progress_term,
    RewardBreakdown, RewardEvents,
};
pub use scene::{empty_map, point_segment_distance, random_scene, Scene};

use crate::dynamics::{rate_controller, rk4_step, BodyCommand, QuadParams, QuadState, RateGains};
use crate::error::{Error, Result};
use crate::gridmap::EsdfMap;
use crate::Vec3;

/// Yaw perturbation applied when resetting onto a fixed scene, rad.
pub const FIXED_SCENE_YAW_JITTER: f64 = 0.1;

/// FIFO that releases each command `delay` control steps after it was issued.
#[derive(Clone, Debug)]
pub struct ActionDelayQueue {
    buf: VecDeque<BodyCommand>,
    delay: usize,
}

impl ActionDelayQueue {
    pub fn new(delay: usize, fill: BodyCommand) -> Self {
        Self {
            buf: std::iter::repeat_n(fill, delay).collect(),
            delay,
        }
    }

    pub fn delay(&self) -> usize {
        self.delay
    }

    /// Enqueues `cmd` and returns the command due now.
    pub fn push(&mut self, cmd: BodyCommand) -> BodyCommand {
        if self.delay == 0 {
            return cmd;
        }
        self.buf.push_back(cmd);
        self.buf.pop_front().expect("queue holds delay entries")
    }
}

/// How an episode ended early.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Crash {
    Collision,
    OutOfBounds,
    Attitude,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepInfo {
    pub reward: RewardBreakdown,
    pub crash: Option<Crash>,
    pub passed_cp: bool,
    pub finished: bool,
    pub action_clamped: bool,
    /// Index of the control point targeted after the step.
    pub cp_index: usize,
    /// Collective thrust actually applied this step (after the delay), N.
    pub applied_thrust: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepResult {
    pub obs: Observation,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub info: StepInfo,
}

/// Maps a normalized action in `[-1, 1]^4` to physical units. Out-of-range
/// components are clamped; the flag reports it.
pub fn action_to_command(cfg: &EnvConfig, a: &[f64]) -> Result<(BodyCommand, bool)> {
    if a.len() != ACTION_DIM {
        return Err(Error::InvalidParam(format!("action has {} entries, expected {ACTION_DIM}", a.len())));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("action {a:?}")));
    }
    let clamped = a.iter().any(|x| x.abs() > 1.0);
    let c: Vec<f64> = a.iter().map(|x| x.clamp(-1.0, 1.0)).collect();
    Ok((
        BodyCommand {
            thrust: (c[0] + 1.0) / 2.0 * cfg.max_thrust(),
            rates: Vec3::new(c[1], c[2], c[3]) * cfg.rate_limit,
        },
        clamped,
    ))
}

#[derive(Clone, Debug)]
enum SceneSource {
    Random { empty: Arc<EsdfMap> },
    Fixed(Scene),
}

/// One simulated vehicle flying a control-point chain.
#[derive(Clone, Debug)]
pub struct QuadEnv {
    cfg: EnvConfig,
    source: SceneSource,
    scene: Scene,
    nominal: QuadParams,
    gains: RateGains,
    plant: QuadParams,
    state: QuadState,
    cp_index: usize,
    queue: ActionDelayQueue,
    steps: usize,
    done: bool,
    episode_return: f64,
    rng: ChaCha8Rng,
    rejected_scenes: u64,
}

impl QuadEnv {
    /// Environment drawing a fresh random scene at every reset.
    pub fn new(cfg: EnvConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let empty = empty_map(&cfg);
        Self::build(cfg, SceneSource::Random { empty }, seed)
    }

    /// Environment replaying `scene` at every reset; the seed only perturbs
    /// the plant parameters and the initial yaw.
    pub fn with_scene(cfg: EnvConfig, scene: Scene, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if scene.control_points.is_empty() {
            return Err(Error::InvalidParam("scene has no control points".into()));
        }
        Self::build(cfg, SceneSource::Fixed(scene), seed)
    }

    fn build(cfg: EnvConfig, source: SceneSource, seed: u64) -> Result<Self> {
        let nominal = cfg.quad.params;
        let placeholder = match &source {
            SceneSource::Random { empty } => Scene {
                map: Arc::clone(empty),
                control_points: vec![Vec3::new(1.0, 0.0, 1.0)],
                start: QuadState::at_rest(Vec3::new(0.0, 0.0, 1.0), 0.0),
                obstacles: Vec::new(),
            },
            SceneSource::Fixed(s) => s.clone(),
        };
        let mut env = Self {
            gains: cfg.quad.gains(),
            queue: ActionDelayQueue::new(cfg.action_delay_steps, BodyCommand::hover(&nominal)),
            state: placeholder.start,
            scene: placeholder,
            plant: nominal,
            nominal,
            cp_index: 0,
            steps: 0,
            done: true,
            episode_return: 0.0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            rejected_scenes: 0,
            source,
            cfg,
        };
        env.reset(seed)?;
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn map(&self) -> &EsdfMap {
        &self.scene.map
    }

    pub fn state(&self) -> &QuadState {
        &self.state
    }

    pub fn plant(&self) -> &QuadParams {
        &self.plant
    }

    pub fn cp_index(&self) -> usize {
        self.cp_index
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn episode_return(&self) -> f64 {
        self.episode_return
    }

    pub fn rejected_scenes(&self) -> u64 {
        self.rejected_scenes
    }

    /// Starts a new episode determined entirely by `seed`.
    pub fn reset(&mut self, seed: u64) -> Result<Observation> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        match &self.source {
            SceneSource::Random { empty } => {
                let (scene, rejected) = random_scene(&self.cfg, empty, &mut self.rng);
                self.rejected_scenes += rejected as u64;
                self.scene = scene;
            }
            SceneSource::Fixed(scene) => {
                self.scene = scene.clone();
                let j = FIXED_SCENE_YAW_JITTER;
                self.scene.start.attitude.z += self.rng.random_range(-j..=j);
            }
        }
        let k = self.cfg.domain_rand;
        let draw = |rng: &mut ChaCha8Rng| if k > 0.0 { rng.random_range(1.0 - k..=1.0 + k) } else { 1.0 };
        let mut plant = self.nominal;
        plant.m *= draw(&mut self.rng);
        plant.inertia.xx *= draw(&mut self.rng);
        plant.inertia.yy *= draw(&mut self.rng);
        plant.inertia.zz *= draw(&mut self.rng);
        plant.kappa *= draw(&mut self.rng);
        self.plant = plant;
        self.state = self.scene.start;
        self.state.acceleration = Vec3::zeros();
        self.cp_index = 0;
        self.steps = 0;
        self.done = false;
        self.episode_return = 0.0;
        self.queue = ActionDelayQueue::new(self.cfg.action_delay_steps, BodyCommand::hover(&self.nominal));
        Ok(self.observation())
    }

    /// Replaces the remaining chain mid-episode; the first new point becomes
    /// the current target.
    pub fn set_control_points(&mut self, cps: Vec<Vec3>) -> Result<()> {
        if cps.is_empty() {
            return Err(Error::InvalidParam("control-point chain is empty".into()));
        }
        self.scene.control_points = cps;
        self.cp_index = 0;
        Ok(())
    }

    /// Resets with a seed drawn from the current episode stream.
    pub fn reset_next(&mut self) -> Result<Observation> {
        let seed = self.rng.next_u64();
        self.reset(seed)
    }

    pub fn observation(&self) -> Observation {
        observe(
            &self.cfg,
            &self.scene.map,
            &self.state,
            &self.scene.control_points,
            self.cp_index,
        )
    }

    fn crash_check(&self, s: &QuadState) -> Option<Crash> {
        let p = s.position;
        let g = self.scene.map.grid();
        if !g.contains(p.xy()) || p.z < self.cfg.z_min || p.z > self.cfg.z_max {
            return Some(Crash::OutOfBounds);
        }
        if g.is_occupied(g.world_to_cell(p.xy())) {
            return Some(Crash::Collision);
        }
        let lim = self.cfg.attitude_limit;
        if s.attitude.x.abs() > lim || s.attitude.y.abs() > lim {
            return Some(Crash::Attitude);
        }
        None
    }

    /// Advances one control period with a normalized action.
    pub fn step_action(&mut self, a: &[f64]) -> Result<StepResult> {
        let (cmd, clamped) = action_to_command(&self.cfg, a)?;
        let mut r = self.step(cmd)?;
        r.info.action_clamped |= clamped;
        Ok(r)
    }

    /// Advances one control period with a physical command.
    pub fn step(&mut self, cmd: BodyCommand) -> Result<StepResult> {
        if self.done {
            return Err(Error::InvalidParam("step called on a finished episode; reset first".into()));
        }
        if !cmd.thrust.is_finite() || cmd.rates.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("command {cmd:?}")));
        }
        let max_t = self.cfg.max_thrust();
        let lim = self.cfg.rate_limit;
        let bounded = BodyCommand {
            thrust: cmd.thrust.clamp(0.0, max_t),
            rates: cmd.rates.map(|w| w.clamp(-lim, lim)),
        };
        let clamped = bounded != cmd;
        let applied = self.queue.push(bounded);

        let prev = self.state;
        let h = self.cfg.dt / self.cfg.physics_substeps as f64;
        let mut crash = None;
        for _ in 0..self.cfg.physics_substeps {
            let alloc = rate_controller(&self.state, &applied, &self.nominal, &self.gains);
            match rk4_step(&self.state, &alloc.thrusts, h, &self.plant) {
                Ok(s) => self.state = s,
                Err(Error::Singular(_)) => {
                    crash = Some(Crash::Attitude);
                    break;
                }
                Err(e) => return Err(e),
            }
            crash = self.crash_check(&self.state);
            if crash.is_some() {
                break;
            }
        }
        if !self.state.is_finite() {
            return Err(Error::NonFinite(format!("state {:?}", self.state)));
        }
        self.steps += 1;

        let cps = &self.scene.control_points;
        let target = cps[self.cp_index];
        let passed = crash.is_none()
            && column_entry(prev.position, self.state.position, target, self.cfg.d_hor, self.cfg.d_hgt)
                .is_some();
        if passed {
            self.cp_index += 1;
        }
        let finished = self.cp_index >= cps.len();
        let fov_targets: Vec<Vec3> = if finished {
            Vec::new()
        } else {
            let (a, b) = observed_targets(cps, self.cp_index);
            vec![a, b]
        };
        let breakdown = compute_reward(
            &self.cfg,
            &prev,
            &self.state,
            target,
            &fov_targets,
            RewardEvents {
                collided: crash.is_some(),
                finished,
            },
        );
        let reward = breakdown.total();
        self.episode_return += reward;
        let terminated = crash.is_some() || finished;
        let truncated = !terminated && self.steps >= self.cfg.max_episode_steps;
        self.done = terminated || truncated;
        Ok(StepResult {
            obs: self.observation(),
            reward,
            terminated,
            truncated,
            info: StepInfo {
                reward: breakdown,
                crash,
                passed_cp: passed,
                finished,
                action_clamped: clamped,
                cp_index: self.cp_index,
                applied_thrust: applied.thrust,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn free_env(seed: u64) -> QuadEnv {
        QuadEnv::new(EnvConfig::for_tag(PolicyTag::Free), seed).unwrap()
    }

    #[test]
    fn delay_queue_releases_in_order() {
        let hover = BodyCommand { thrust: 1.0, rates: Vec3::zeros() };
        let mut q = ActionDelayQueue::new(2, hover);
        let cmds: Vec<BodyCommand> = (0..5)
            .map(|i| BodyCommand { thrust: 10.0 + i as f64, rates: Vec3::zeros() })
            .collect();
        let out: Vec<f64> = cmds.iter().map(|c| q.push(*c).thrust).collect();
        assert_eq!(out, vec![1.0, 1.0, 10.0, 11.0, 12.0]);
        let mut q0 = ActionDelayQueue::new(0, hover);
        assert_eq!(q0.push(cmds[3]), cmds[3]);
    }

    #[test]
    fn reset_is_deterministic() {
        let a = free_env(5);
        let b = free_env(5);
        assert_eq!(a.observation(), b.observation());
        assert_eq!(a.plant(), b.plant());
        let c = free_env(6);
        assert_ne!(a.observation(), c.observation());
    }

    #[test]
    fn free_scene_reads_sentinels() {
        let env = free_env(1);
        let o = env.observation();
        assert_eq!(o.block("d_vel"), &[5.0]);
        assert!(o.block("o_sdf").iter().all(|&x| x == 5.0));
        let norm: f64 = o.block("heading").iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
    }

    #[test]
    fn hover_step_pays_time_penalty() {
        let mut cfg = EnvConfig::for_tag(PolicyTag::Free);
        cfg.domain_rand = 0.0;
        let p = cfg.quad.params;
        let scene = Scene {
            map: empty_map(&cfg),
            control_points: vec![Vec3::new(3.0, 0.0, 1.0)],
            start: QuadState::at_rest(Vec3::new(0.0, 0.0, 1.0), 0.0),
            obstacles: Vec::new(),
        };
        let mut env = QuadEnv::with_scene(cfg, scene, 0).unwrap();
        // cancel the yaw jitter so the target stays centered
        env.state.attitude.z = 0.0;
        let r = env.step(BodyCommand::hover(&p)).unwrap();
        assert!((r.info.reward.progress + 3.0).abs() < 1e-6, "{:?}", r.info.reward);
        assert!(r.info.reward.smooth.abs() < 1e-9);
        assert!((r.reward + 3.0).abs() < 1e-6);
        assert!(!r.terminated && !r.truncated);
    }

    #[test]
    fn falling_out_of_bounds_crashes() {
        let mut env = free_env(2);
        let cmd = BodyCommand { thrust: 0.0, rates: Vec3::zeros() };
        let mut last = None;
        for _ in 0..200 {
            let r = env.step(cmd).unwrap();
            if r.terminated {
                last = Some(r);
                break;
            }
        }
        let r = last.expect("free fall must end the episode");
        assert_eq!(r.info.crash, Some(Crash::OutOfBounds));
        assert_eq!(r.info.reward.collision, -600.0);
        assert!(env.step(cmd).is_err());
    }

    #[test]
    fn rejects_non_finite_actions_and_clamps_large_ones() {
        let mut env = free_env(3);
        assert!(env.step_action(&[f64::NAN, 0.0, 0.0, 0.0]).is_err());
        let r = env.step_action(&[2.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(r.info.action_clamped);
        let (cmd, clamped) = action_to_command(env.config(), &[0.0, 1.0, -1.0, 0.5]).unwrap();
        assert!(!clamped);
        assert_eq!(cmd.thrust, 16.0);
        assert_eq!(cmd.rates, Vec3::new(5.0, -5.0, 2.5));
    }
}
