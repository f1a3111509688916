//! Randomized training scenes.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::dynamics::QuadState;
use crate::gridmap::{build_esdf, EsdfMap, OccupancyGrid};
use crate::{Vec2, Vec3};

use super::config::EnvConfig;

/// A map, an ordered control-point chain and the initial vehicle state.
#[derive(Clone, Debug)]
pub struct Scene {
    pub map: Arc<EsdfMap>,
    pub control_points: Vec<Vec3>,
    pub start: QuadState,
    /// Raw obstacle discs `(center, radius)` when the scene was generated.
    pub obstacles: Vec<(Vec2, f64)>,
}

/// Distance from `p` to the segment `a → b`.
pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let d = b - a;
    let len2 = d.norm_squared();
    let t = if len2 > 0.0 { ((p - a).dot(&d) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (a + d * t - p).norm()
}

fn uniform(rng: &mut impl Rng, range: [f64; 2]) -> f64 {
    if range[1] > range[0] {
        rng.random_range(range[0]..=range[1])
    } else {
        range[0]
    }
}

fn empty_grid(cfg: &EnvConfig) -> OccupancyGrid {
    let s = &cfg.scene;
    let n = (s.map_size / s.map_resolution).round().max(1.0) as usize;
    let half = n as f64 * s.map_resolution / 2.0;
    OccupancyGrid::new(n, n, s.map_resolution, Vec2::new(-half, -half)).expect("valid scene grid")
}

/// Obstacle-free map with the training geometry, shared between resets.
pub fn empty_map(cfg: &EnvConfig) -> Arc<EsdfMap> {
    Arc::new(build_esdf(&empty_grid(cfg), cfg.scene.inflation))
}

/// Control-point chain starting from the map center.
fn sample_chain(cfg: &EnvConfig, rng: &mut impl Rng) -> Vec<Vec3> {
    let s = &cfg.scene;
    let mut cps = Vec::with_capacity(s.cp_count);
    let mut at = Vec2::zeros();
    let mut bearing = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    for i in 0..s.cp_count {
        if i > 0 {
            bearing += rng.random_range(-s.cp_max_turn..=s.cp_max_turn);
        }
        at += Vec2::new(bearing.cos(), bearing.sin()) * uniform(rng, s.cp_distance);
        cps.push(Vec3::new(at.x, at.y, uniform(rng, s.cp_z)));
    }
    cps
}

/// Discs beside the chain, each keeping `inflation + channel_margin` between
/// its surface and every chain segment. `None` if placement fails.
fn place_obstacles(cfg: &EnvConfig, chain: &[Vec2], rng: &mut impl Rng) -> Option<Vec<(Vec2, f64)>> {
    let s = &cfg.scene;
    let count = rng.random_range(s.obstacle_count[0]..=s.obstacle_count[1]);
    let clearance = s.inflation + s.channel_margin;
    let half = s.map_size / 2.0;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut placed = false;
        for _ in 0..s.max_tries {
            let k = rng.random_range(0..chain.len() - 1);
            let (a, b) = (chain[k], chain[k + 1]);
            let base = a + (b - a) * rng.random_range(0.0..=1.0);
            let dir = (b - a).try_normalize(1e-12).unwrap_or(Vec2::x());
            let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let r = uniform(rng, s.obstacle_radius);
            let gap = r + clearance + uniform(rng, s.obstacle_offset);
            let c = base + Vec2::new(-dir.y, dir.x) * (side * gap);
            let clear = chain
                .windows(2)
                .all(|w| point_segment_distance(c, w[0], w[1]) >= r + clearance);
            if clear && c.x.abs() + r < half && c.y.abs() + r < half {
                out.push((c, r));
                placed = true;
                break;
            }
        }
        if !placed {
            return None;
        }
    }
    Some(out)
}

fn initial_state(cfg: &EnvConfig, cp1: Vec3, rng: &mut impl Rng) -> QuadState {
    let s = &cfg.scene;
    let to_cp = cp1.xy();
    let bearing = to_cp.y.atan2(to_cp.x);
    let noise = Normal::new(0.0, s.velocity_angle_sigma.max(1e-12)).expect("finite sigma");
    let heading = bearing + noise.sample(rng);
    let speed = rng.random_range(0.0..=s.speed_fraction * cfg.v_max);
    let mut state = QuadState::at_rest(Vec3::new(0.0, 0.0, s.start_z), 0.0);
    state.velocity = Vec3::new(heading.cos(), heading.sin(), 0.0) * speed;
    state.attitude = Vec3::new(
        rng.random_range(-s.init_tilt..=s.init_tilt),
        rng.random_range(-s.init_tilt..=s.init_tilt),
        crate::dynamics::wrap_angle(bearing + rng.random_range(-s.init_yaw_noise..=s.init_yaw_noise)),
    );
    state.body_rates = Vec3::new(
        rng.random_range(-s.init_rate..=s.init_rate),
        rng.random_range(-s.init_rate..=s.init_rate),
        rng.random_range(-s.init_rate..=s.init_rate),
    );
    state
}

/// Draws a training scene. Returns the scene and the number of rejected
/// attempts before it.
pub fn random_scene(cfg: &EnvConfig, empty: &Arc<EsdfMap>, rng: &mut impl Rng) -> (Scene, u32) {
    let mut rejected = 0;
    loop {
        let cps = sample_chain(cfg, rng);
        let start = initial_state(cfg, cps[0], rng);
        let mut chain: Vec<Vec2> = vec![start.position.xy()];
        chain.extend(cps.iter().map(|c| c.xy()));
        let half = cfg.scene.map_size / 2.0 - cfg.scene.inflation - cfg.d_hor;
        if chain.iter().any(|p| p.x.abs() > half || p.y.abs() > half) {
            rejected += 1;
            continue;
        }
        let Some(obstacles) = place_obstacles(cfg, &chain, rng) else {
            rejected += 1;
            continue;
        };
        let map = if obstacles.is_empty() {
            Arc::clone(empty)
        } else {
            let mut g = empty_grid(cfg);
            for (c, r) in &obstacles {
                g.fill_disc(*c, *r);
            }
            Arc::new(build_esdf(&g, cfg.scene.inflation))
        };
        return (
            Scene {
                map,
                control_points: cps,
                start,
                obstacles,
            },
            rejected,
        );
    }
}
