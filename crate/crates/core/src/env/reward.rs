use crate::dynamics::QuadState;
use crate::Vec3;

use super::config::EnvConfig;
use super::observe::in_fov;

/// Parameter range `[t_in, t_out] ⊂ [0, 1]` over which the segment `a → b`
/// lies inside the vertical column of `radius` and `half_height` at `center`.
pub fn column_overlap(a: Vec3, b: Vec3, center: Vec3, radius: f64, half_height: f64) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let d = b - a;
    // vertical slab
    let z0 = a.z - center.z;
    if d.z.abs() < 1e-15 {
        if z0.abs() > half_height {
            return None;
        }
    } else {
        let t1 = (-half_height - z0) / d.z;
        let t2 = (half_height - z0) / d.z;
        lo = lo.max(t1.min(t2));
        hi = hi.min(t1.max(t2));
    }
    // horizontal disc: |w + t·e|² ≤ r²
    let w = (a - center).xy();
    let e = d.xy();
    let qa = e.norm_squared();
    let qb = 2.0 * w.dot(&e);
    let qc = w.norm_squared() - radius * radius;
    if qa < 1e-18 {
        if qc > 0.0 {
            return None;
        }
    } else {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        lo = lo.max((-qb - sq) / (2.0 * qa));
        hi = hi.min((-qb + sq) / (2.0 * qa));
    }
    (lo <= hi).then_some((lo, hi))
}

/// First point of the segment inside the pass column, if any.
pub fn column_entry(a: Vec3, b: Vec3, center: Vec3, radius: f64, half_height: f64) -> Option<Vec3> {
    column_overlap(a, b, center, radius, half_height).map(|(t, _)| a + (b - a) * t)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RewardEvents {
    pub collided: bool,
    pub finished: bool,
}

/// Unweighted terms and their weighted contributions to the step reward.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RewardBreakdown {
    /// Normalized progress including the time term.
    pub r_p: f64,
    /// Minus the number of violated limits.
    pub r_d: f64,
    /// -1 when neither observed control point is in view.
    pub r_v: f64,
    pub progress: f64,
    pub collision: f64,
    pub dynamics: f64,
    pub fov: f64,
    pub smooth: f64,
    pub finish: f64,
}

impl RewardBreakdown {
    pub fn total(&self) -> f64 {
        self.progress + self.collision + self.dynamics + self.fov + self.smooth + self.finish
    }
}

/// Number of exceeded limits among speed, acceleration and roll/pitch.
pub fn dynamic_violations(cfg: &EnvConfig, s: &QuadState) -> u32 {
    let speed = (s.velocity.norm() > cfg.v_max) as u32;
    let accel = (s.acceleration.norm() > cfg.a_max) as u32;
    let tilt = (s.attitude.x.abs() > cfg.attitude_soft_limit
        || s.attitude.y.abs() > cfg.attitude_soft_limit) as u32;
    speed + accel + tilt
}

/// Normalized progress toward `cp` between two positions, plus the time term.
pub fn progress_term(cfg: &EnvConfig, prev: Vec3, cur: Vec3, cp: Vec3) -> f64 {
    let target = column_entry(prev, cur, cp, cfg.d_hor, cfg.d_hgt).unwrap_or(cp);
    ((target - prev).norm() - (target - cur).norm()) / (cfg.v_max * cfg.dt) + cfg.r_t
}

/// Step reward for moving from `prev` to `cur` while targeting `cp`.
/// `fov_targets` are the control points observed after the step (empty once
/// the last one is passed).
pub fn compute_reward(
    cfg: &EnvConfig,
    prev: &QuadState,
    cur: &QuadState,
    cp: Vec3,
    fov_targets: &[Vec3],
    events: RewardEvents,
) -> RewardBreakdown {
    let r_p = progress_term(cfg, prev.position, cur.position, cp);
    let r_d = -(dynamic_violations(cfg, cur) as f64);
    let visible = fov_targets.is_empty() || fov_targets.iter().any(|t| in_fov(cfg, cur, *t));
    let r_v = if visible { 0.0 } else { -1.0 };
    RewardBreakdown {
        r_p,
        r_d,
        r_v,
        progress: cfg.k_p * r_p,
        collision: if events.collided { cfg.r_c } else { 0.0 },
        dynamics: cfg.k_d * r_d,
        fov: cfg.k_v * r_v,
        smooth: -cfg.k_s * cur.body_rates.norm(),
        finish: if events.finished { cfg.r_f } else { 0.0 },
    }
}
