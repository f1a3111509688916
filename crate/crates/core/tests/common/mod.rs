#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use nalgebra::UnitQuaternion;
use resc::dynamics::QuadState;
use resc::env::{compute_reward, dynamic_violations, progress_term, EnvConfig, RewardEvents};
use resc::gridmap::{build_esdf, CellIndex, EsdfMap, OccupancyGrid};
use resc::ppo::{gaussian_log_prob, loss_and_grad, normalize_advantages, Minibatch, Policy, PpoConfig, Workspace};
use resc::search::oracle;
use resc::{Vec2, Vec3};

/// Random map of axis-aligned rectangles with total occupied fraction close to
/// (and never above) `max_density`.
pub fn random_block_grid(size: usize, max_density: f64, seed: u64) -> OccupancyGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = OccupancyGrid::new(size, size, 0.1, Vec2::zeros()).unwrap();
    let target = rng.random_range(0.05..max_density);
    let total = (size * size) as f64;
    for _ in 0..200 {
        let w = rng.random_range(1..=7);
        let h = rng.random_range(1..=7);
        let x0 = rng.random_range(0..size as i32);
        let y0 = rng.random_range(0..size as i32);
        let mut trial = g.clone();
        for x in x0..x0 + w {
            for y in y0..y0 + h {
                trial.set(CellIndex::new(x, y), true);
            }
        }
        if trial.occupied_count() as f64 / total > max_density {
            continue;
        }
        g = trial;
        if g.occupied_count() as f64 / total >= target {
            break;
        }
    }
    g
}

pub fn random_free_cell(map: &EsdfMap, rng: &mut impl Rng) -> CellIndex {
    let g = map.grid();
    loop {
        let c = CellIndex::new(
            rng.random_range(0..g.width() as i32),
            rng.random_range(0..g.height() as i32),
        );
        if !g.is_occupied(c) {
            return c;
        }
    }
}

pub fn random_map(size: usize, max_density: f64, seed: u64) -> EsdfMap {
    build_esdf(&random_block_grid(size, max_density, seed), 0.0)
}

/// Distance from `p` to the nearest occupied cell center, by exhaustive scan.
pub fn brute_distance(grid: &OccupancyGrid, p: Vec2) -> Option<f64> {
    let mut best: Option<f64> = None;
    for x in 0..grid.width() as i32 {
        for y in 0..grid.height() as i32 {
            let c = CellIndex::new(x, y);
            if grid.is_occupied(c) {
                let d = (grid.cell_center(c) - p).norm();
                best = Some(best.map_or(d, |b| b.min(d)));
            }
        }
    }
    best
}

/// Solvable random instances on 40×40 maps with at most 20% occupancy.
pub fn solvable_instances(count: usize) -> Vec<(EsdfMap, Vec2, Vec2, f64, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut out = Vec::new();
    let mut seed = 0;
    while out.len() < count {
        seed += 1;
        let map = random_map(40, 0.2, seed);
        let s = random_free_cell(&map, &mut rng);
        let g = random_free_cell(&map, &mut rng);
        let (sp, gp) = (map.grid().cell_center(s), map.grid().cell_center(g));
        if let Some(best) = oracle::visibility_graph_shortest(&map, sp, gp) {
            out.push((map, sp, gp, best, seed));
        }
    }
    out
}

/// GAE as the explicit discounted sum of TD errors up to the episode end.
pub fn brute_gae(r: &[f64], v: &[f64], d: &[bool], last: f64, g: f64, l: f64) -> Vec<f64> {
    let n = r.len();
    let next_v = |k: usize| if k + 1 < n { v[k + 1] } else { last };
    (0..n)
        .map(|t| {
            let mut acc = 0.0;
            for k in t..n {
                let mut w = 1.0;
                let mut alive = true;
                for j in t..k {
                    w *= g * l;
                    if d[j] {
                        alive = false;
                    }
                }
                if !alive {
                    break;
                }
                let delta = r[k] + if d[k] { 0.0 } else { g * next_v(k) } - v[k];
                acc += w * delta;
            }
            acc
        })
        .collect()
}

/// Largest relative error between the analytic PPO loss gradient and
/// central differences, over every parameter.
pub fn fd_worst_error(obs_dim: usize, act_dim: usize, hidden: &[usize], seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut policy = Policy::new(obs_dim, act_dim, hidden, -0.3, false, &mut rng);
    // larger weights than the default init so every layer matters
    for p in policy.params.iter_mut() {
        *p += rng.random_range(-0.5..0.5);
    }
    let n = 12;
    let obs: Vec<f64> = (0..n * obs_dim).map(|_| rng.random_range(-1.5..1.5)).collect();
    let actions: Vec<f64> = (0..n * act_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut adv: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    normalize_advantages(&mut adv);
    let returns: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
    // current log-probs shifted so ratios fall inside and well outside the clip band
    let cfg = PpoConfig {
        entropy_coef: 0.01,
        ..PpoConfig::default()
    };
    let mut cache = resc::ppo::nn::MlpCache::default();
    policy.actor_forward(&obs, n, &mut cache);
    let means = cache.output().to_vec();
    let old: Vec<f64> = (0..n)
        .map(|i| {
            let lp = gaussian_log_prob(
                &actions[i * act_dim..(i + 1) * act_dim],
                &means[i * act_dim..(i + 1) * act_dim],
                policy.log_std(),
            );
            let shift = [0.0, 0.08, -0.08, 0.6, -0.6][i % 5];
            lp - shift
        })
        .collect();
    let mb = Minibatch {
        obs: &obs,
        actions: &actions,
        old_log_probs: &old,
        advantages: &adv,
        returns: &returns,
    };
    let mut ws = Workspace::default();
    let mut grad = vec![0.0; policy.params.len()];
    loss_and_grad(&policy, &mb, &cfg, &mut grad, &mut ws);
    let mut scratch = vec![0.0; grad.len()];
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for k in 0..policy.params.len() {
        let base = policy.params[k];
        policy.params[k] = base + h;
        let lp = loss_and_grad(&policy, &mb, &cfg, &mut scratch, &mut ws).loss;
        policy.params[k] = base - h;
        let lm = loss_and_grad(&policy, &mb, &cfg, &mut scratch, &mut ws).loss;
        policy.params[k] = base;
        let fd = (lp - lm) / (2.0 * h);
        let rel = (fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}

pub fn random_state(rng: &mut impl Rng) -> QuadState {
    let mut s = QuadState::at_rest(Vec3::zeros(), 0.0);
    let mut v3 = |r: f64| Vec3::new(rng.random_range(-r..r), rng.random_range(-r..r), rng.random_range(-r..r));
    s.position = v3(5.0);
    s.velocity = v3(3.0);
    s.acceleration = v3(6.0);
    s.attitude = v3(1.1);
    s.body_rates = v3(3.0);
    s
}

/// Straight approaches to a control point, cut into uneven steps that stop on
/// the first contact with the pass column. Returns the largest gap between the
/// summed progress terms and the contact distance over `v_max·dt`.
pub fn telescoping_worst_error(count: usize, seed: u64) -> f64 {
    let cfg = EnvConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let cp = Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(0.8..1.2));
        let dir = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-0.1..0.1))
            .normalize();
        let p0 = cp + dir * rng.random_range(1.0..6.0);
        // first contact with the column along p0 -> cp, in closed form
        let off = p0 - cp;
        let t_h = 1.0 - cfg.d_hor / off.xy().norm();
        let t_v = if off.z.abs() > cfg.d_hgt { 1.0 - cfg.d_hgt / off.z.abs() } else { 0.0 };
        let end = p0 + (cp - p0) * t_h.max(t_v);
        let mut cuts: Vec<f64> = (0..rng.random_range(5..200)).map(|_| rng.random_range(0.0..1.0)).collect();
        cuts.push(1.0);
        cuts.sort_by(f64::total_cmp);
        let mut sum = 0.0;
        let mut prev = p0;
        for c in cuts {
            let cur = p0 + (end - p0) * c;
            sum += progress_term(&cfg, prev, cur, cp) - cfg.r_t;
            prev = cur;
        }
        let want = (end - p0).norm() / (cfg.v_max * cfg.dt);
        worst = worst.max((sum - want).abs());
    }
    worst
}

/// Random states where the dynamics penalty disagrees with a direct count of
/// exceeded limits.
pub fn violation_census_mismatches(count: usize, seed: u64) -> usize {
    let cfg = EnvConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for _ in 0..count {
        let s = random_state(&mut rng);
        let n = u32::from(s.velocity.norm() > 3.0)
            + u32::from(s.acceleration.norm() > 6.0)
            + u32::from(s.attitude.x.abs() > 0.8 || s.attitude.y.abs() > 0.8);
        let r = compute_reward(&cfg, &s, &s, Vec3::zeros(), &[], RewardEvents::default());
        if dynamic_violations(&cfg, &s) != n || r.r_d != -(n as f64) || r.dynamics != -5.0 * n as f64 {
            bad += 1;
        }
    }
    bad
}

pub fn cone_contains(state: &QuadState, target: Vec3, h: f64, v: f64) -> bool {
    let a = state.attitude;
    let q = UnitQuaternion::from_euler_angles(a.x, a.y, a.z);
    let b = q.inverse_transform_vector(&(target - state.position));
    b.x > 0.0 && b.y.abs() <= b.x * h.tan() && b.z.abs() <= b.x * v.tan()
}

/// Random poses with two targets; returns (mismatches, poses with a target in
/// view, poses without).
pub fn fov_mismatches(count: usize, seed: u64) -> (usize, usize, usize) {
    let cfg = EnvConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut bad, mut seen, mut unseen) = (0, 0, 0);
    for _ in 0..count {
        let s = random_state(&mut rng);
        let targets: Vec<Vec3> = (0..2)
            .map(|_| {
                s.position
                    + s.heading() * rng.random_range(-1.0..4.0)
                    + Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-1.5..1.5))
            })
            .collect();
        let visible = targets
            .iter()
            .any(|t| cone_contains(&s, *t, cfg.fov_half_angle_h, cfg.fov_half_angle_v));
        let r = compute_reward(&cfg, &s, &s, targets[0], &targets, RewardEvents::default());
        if r.r_v != if visible { 0.0 } else { -1.0 } {
            bad += 1;
        }
        if visible {
            seen += 1;
        } else {
            unseen += 1;
        }
    }
    (bad, seen, unseen)
}
