//! Plan-and-fly: search a path, sample control points, and let the trained
//! policies fly them in simulation.

use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use crate::dynamics::QuadState;
use crate::env::{layout_hash, select_policy_model, Crash, EnvConfig, PolicyTag, QuadEnv, Scene, DEFAULT_CLEARANCE, OBS_DIM};
use crate::error::{Error, Result};
use crate::gridmap::build_esdf;
use crate::metrics::{compute_metrics, RunMetrics};
use crate::ppo::{Checkpoint, Policy};
use crate::scenario::Scenario;
use crate::search::{sample_control_points, PathPolyline, VisibilitySearch, DEFAULT_CP_SPACING};
use crate::trace::{Trace, TraceRow};
use crate::{Vec2, Vec3};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ModelChoice {
    /// Pick per step from the map around the upcoming control points.
    #[default]
    Auto,
    Fixed(PolicyTag),
}

impl FromStr for ModelChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Self::Auto),
            other => other.parse().map(Self::Fixed),
        }
    }
}

/// Trained policies by tag.
#[derive(Clone, Debug, Default)]
pub struct PolicySet {
    pub free: Option<Policy>,
    pub obstacle: Option<Policy>,
}

impl PolicySet {
    /// Loads `<dir>/free.json` and `<dir>/obstacle.json`. Models that `choice`
    /// needs must exist; others are loaded when present.
    pub fn load_dir(dir: &Path, choice: ModelChoice) -> Result<Self> {
        let mut set = Self::default();
        for tag in PolicyTag::ALL {
            let path = dir.join(format!("{tag}.json"));
            let needed = match choice {
                ModelChoice::Auto => true,
                ModelChoice::Fixed(t) => t == tag,
            };
            if !path.exists() {
                if needed {
                    return Err(Error::MissingModel(format!("{tag} (expected {})", path.display())));
                }
                continue;
            }
            let ck = Checkpoint::load(&path)?;
            ck.check_layout(layout_hash(), OBS_DIM)?;
            set.insert(tag, ck.policy()?);
        }
        Ok(set)
    }

    pub fn insert(&mut self, tag: PolicyTag, p: Policy) {
        match tag {
            PolicyTag::Free => self.free = Some(p),
            PolicyTag::Obstacle => self.obstacle = Some(p),
        }
    }

    pub fn get(&self, tag: PolicyTag) -> Result<&Policy> {
        match tag {
            PolicyTag::Free => self.free.as_ref(),
            PolicyTag::Obstacle => self.obstacle.as_ref(),
        }
        .ok_or_else(|| Error::MissingModel(tag.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlyOptions {
    pub seed: u64,
    pub model: ModelChoice,
    pub cp_spacing: f64,
    /// Re-search from the current position every this many control steps.
    pub replan_every: Option<usize>,
    /// Ring radius for the search, cells; `None` covers the whole map.
    pub r_max: Option<i32>,
    /// ESDF threshold for switching to the obstacle model, m.
    pub clearance: f64,
}

impl Default for FlyOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            model: ModelChoice::Auto,
            cp_spacing: DEFAULT_CP_SPACING,
            replan_every: None,
            r_max: None,
            clearance: DEFAULT_CLEARANCE,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Crash(Crash),
    Timeout,
    SearchFailed,
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Outcome::Success => "success",
            Outcome::Crash(Crash::Collision) => "collision",
            Outcome::Crash(Crash::OutOfBounds) => "out_of_bounds",
            Outcome::Crash(Crash::Attitude) => "attitude",
            Outcome::Timeout => "timeout",
            Outcome::SearchFailed => "search_failed",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug)]
pub struct Flight {
    pub outcome: Outcome,
    pub metrics: RunMetrics,
    pub trace: Trace,
    pub path: Option<PathPolyline>,
    /// Control points of the initial plan.
    pub control_points: Vec<Vec3>,
    /// Control steps flown by the free and obstacle models.
    pub model_steps: [usize; 2],
    pub replans: usize,
}

/// Environment settings used for evaluation flights: the scenario's altitude
/// band and time limit, nominal plant parameters.
pub fn flight_env_config(base: &EnvConfig, scenario: &Scenario) -> EnvConfig {
    let mut cfg = base.clone();
    cfg.z_min = scenario.z_center - scenario.z_half_width;
    cfg.z_max = scenario.z_center + scenario.z_half_width;
    cfg.domain_rand = 0.0;
    cfg.max_episode_steps = (scenario.max_time / cfg.dt).ceil().max(1.0) as usize;
    cfg
}

fn plan(
    search_map: &crate::gridmap::EsdfMap,
    from: Vec2,
    goal: Vec2,
    z: f64,
    opts: &FlyOptions,
    seed: u64,
) -> Result<(PathPolyline, Vec<Vec3>)> {
    let g = search_map.grid();
    let r_max = opts.r_max.unwrap_or(g.width().max(g.height()) as i32);
    let out = VisibilitySearch::new(r_max).run(search_map, from, goal, seed)?;
    let cps = sample_control_points(&out.path, from, opts.cp_spacing, usize::MAX)?;
    let cps = cps.points.iter().map(|p| Vec3::new(p.x, p.y, z)).collect();
    Ok((out.path, cps))
}

fn row(state: &QuadState, t: f64, thrust: f64, reward: f64, events: &[String]) -> TraceRow {
    TraceRow {
        t,
        position: state.position,
        velocity: state.velocity,
        acceleration: state.acceleration,
        attitude: state.attitude,
        body_rates: state.body_rates,
        thrust,
        reward,
        event: events.join(";"),
    }
}

/// Runs one plan-and-fly episode. Search failures and crashes are reported
/// in the result; only invalid inputs and missing models are errors.
pub fn fly(scenario: &Scenario, base: &EnvConfig, policies: &PolicySet, opts: &FlyOptions) -> Result<Flight> {
    if let ModelChoice::Fixed(t) = opts.model {
        policies.get(t)?;
    } else {
        policies.get(PolicyTag::Free)?;
        policies.get(PolicyTag::Obstacle)?;
    }
    let raw = scenario.raw_grid()?;
    let map = Arc::new(build_esdf(&raw, scenario.inflation));
    scenario.validate(&map)?;
    let search_map = build_esdf(&raw, scenario.inflation + scenario.search_margin);
    let clearance_map = build_esdf(&raw, 0.0);
    let cfg = flight_env_config(base, scenario);
    cfg.validate()?;
    let z = scenario.z_center;

    let (path, cps) = match plan(&search_map, scenario.start(), scenario.goal(), z, opts, opts.seed) {
        Ok(p) => p,
        Err(Error::Unreachable | Error::Occupied { .. } | Error::OutOfBounds(_)) => {
            return Ok(Flight {
                outcome: Outcome::SearchFailed,
                metrics: compute_metrics(&Trace::default(), None),
                trace: Trace::default(),
                path: None,
                control_points: Vec::new(),
                model_steps: [0, 0],
                replans: 0,
            })
        }
        Err(e) => return Err(e),
    };
    let start_xy = scenario.start();
    let first = cps[0].xy() - start_xy;
    let yaw = first.y.atan2(first.x);
    let scene = Scene {
        map: Arc::clone(&map),
        control_points: cps.clone(),
        start: QuadState::at_rest(Vec3::new(start_xy.x, start_xy.y, z), yaw),
        obstacles: Vec::new(),
    };
    let mut env = QuadEnv::with_scene(cfg.clone(), scene, opts.seed)?;
    let mut obs = env.observation();
    let hover = crate::dynamics::BodyCommand::hover(&cfg.quad.params).thrust;
    let mut trace = Trace::default();
    trace.rows.push(row(env.state(), 0.0, hover, 0.0, &["start".to_string()]));

    let mut model_steps = [0usize; 2];
    let mut last_tag = None;
    let mut replans = 0;
    let mut passed_total = 0usize;
    let outcome = loop {
        let mut events = Vec::new();
        let tag = match opts.model {
            ModelChoice::Fixed(t) => t,
            ModelChoice::Auto => {
                let ahead: Vec<Vec2> = env.scene().control_points[env.cp_index()..].iter().map(|c| c.xy()).collect();
                select_policy_model(&map, env.state().position.xy(), &ahead, cfg.sensing_horizon, opts.clearance)
            }
        };
        if last_tag != Some(tag) {
            events.push(format!("model:{tag}"));
            last_tag = Some(tag);
        }
        model_steps[usize::from(tag == PolicyTag::Obstacle)] += 1;
        let action: Vec<f64> = policies
            .get(tag)?
            .act_deterministic(obs.as_slice())
            .iter()
            .map(|x| x.clamp(-1.0, 1.0))
            .collect();
        let r = env.step_action(&action)?;
        if r.info.passed_cp {
            events.push(format!("pass:{passed_total}"));
            passed_total += 1;
        }
        let outcome = if let Some(c) = r.info.crash {
            Some(Outcome::Crash(c))
        } else if r.info.finished {
            Some(Outcome::Success)
        } else if r.truncated {
            Some(Outcome::Timeout)
        } else {
            None
        };
        match outcome {
            Some(Outcome::Success) => events.push("finish".into()),
            Some(o) => events.push(o.to_string()),
            None => {}
        }
        let t = env.steps() as f64 * cfg.dt;
        trace.rows.push(row(env.state(), t, r.info.applied_thrust, r.reward, &events));
        if let Some(o) = outcome {
            break o;
        }
        obs = r.obs;
        if let Some(n) = opts.replan_every {
            if n > 0 && env.steps() % n == 0 {
                let here = env.state().position.xy();
                let seed = opts.seed.wrapping_add(env.steps() as u64);
                if let Ok((_, new_cps)) = plan(&search_map, here, scenario.goal(), z, opts, seed) {
                    env.set_control_points(new_cps)?;
                    obs = env.observation();
                    replans += 1;
                }
            }
        }
    };
    let metrics = compute_metrics(&trace, Some(&clearance_map));
    Ok(Flight {
        outcome,
        metrics,
        trace,
        path: Some(path),
        control_points: cps,
        model_steps,
        replans,
    })
}
