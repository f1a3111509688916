//! Observation vector construction.

use crate::dynamics::QuadState;
use crate::gridmap::EsdfMap;
use crate::{Vec2, Vec3};

use super::config::{EnvConfig, PolicyTag};

/// Named blocks of the observation vector, in order.
pub const OBS_LAYOUT: [(&str, usize); 10] = [
    ("v_w", 3),
    ("omega_b", 3),
    ("theta", 3),
    ("heading", 3),
    ("rel_cp1", 3),
    ("rel_cp2", 3),
    ("o_cp", 4),
    ("o_vcp", 4),
    ("d_vel", 1),
    ("o_sdf", 9),
];

pub const OBS_DIM: usize = 36;
pub const ACTION_DIM: usize = 4;

pub const KGP_RAYS: usize = 11;
pub const KGP_HALF_ANGLE: f64 = 25.0 * std::f64::consts::PI / 180.0;
/// Below this planar speed the velocity sector falls back to the control-point direction.
pub const KGP_MIN_SPEED: f64 = 0.05;
pub const SDF_RING_RADIUS: f64 = 0.5;
pub const DEFAULT_CLEARANCE: f64 = 1.5;

/// Offset of a named block inside the observation vector.
pub fn layout_offset(name: &str) -> Option<usize> {
    let mut off = 0;
    for (n, len) in OBS_LAYOUT {
        if n == name {
            return Some(off);
        }
        off += len;
    }
    None
}

/// FNV-1a over the layout description; stored in checkpoints.
pub fn layout_hash() -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for (name, len) in OBS_LAYOUT {
        for b in format!("{name}:{len};").bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation(pub [f64; OBS_DIM]);

impl Observation {
    pub fn block(&self, name: &str) -> &[f64] {
        let off = layout_offset(name).unwrap_or_else(|| panic!("no observation block {name}"));
        let len = OBS_LAYOUT.iter().find(|(n, _)| *n == name).unwrap().1;
        &self.0[off..off + len]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KgpObservation {
    pub o_cp: [f64; 4],
    pub o_vcp: [f64; 4],
    pub d_vel: f64,
}

fn blocked(map: &EsdfMap, q: Vec2) -> bool {
    let g = map.grid();
    !g.contains(q) || g.is_occupied(g.world_to_cell(q))
}

fn unit(angle: f64) -> Vec2 {
    Vec2::new(angle.cos(), angle.sin())
}

/// Marches from `p` along `dir` in steps of the map resolution; returns the
/// distance of the first blocked sample within `range`.
pub fn march(map: &EsdfMap, p: Vec2, dir: Vec2, range: f64) -> Option<f64> {
    let step = map.resolution();
    let n = (range / step + 1e-9).floor() as usize;
    (1..=n).map(|i| i as f64 * step).find(|&s| blocked(map, p + dir * s))
}

/// Sector search toward a target: up to two obstacle-edge hits, nearest first,
/// relative to `p`; missing entries read `horizon` along the sector center.
fn sector_edges(map: &EsdfMap, p: Vec2, center: f64, range: f64, horizon: f64) -> [f64; 4] {
    let res = map.resolution();
    let mut hits: Vec<(f64, Vec2)> = Vec::new();
    for k in 0..KGP_RAYS {
        let a = center - KGP_HALF_ANGLE + 2.0 * KGP_HALF_ANGLE * k as f64 / (KGP_RAYS - 1) as f64;
        let dir = unit(a);
        if let Some(s) = march(map, p, dir, range) {
            let q = p + dir * s;
            let perp = Vec2::new(-dir.y, dir.x) * res;
            if !blocked(map, q + perp) || !blocked(map, q - perp) {
                hits.push((s, q - p));
            }
        }
    }
    hits.sort_by(|a, b| a.0.total_cmp(&b.0));
    let pad = unit(center) * horizon;
    let mut out = [pad.x, pad.y, pad.x, pad.y];
    for (i, (_, rel)) in hits.iter().take(2).enumerate() {
        out[2 * i] = rel.x.clamp(-horizon, horizon);
        out[2 * i + 1] = rel.y.clamp(-horizon, horizon);
    }
    out
}

/// Kinematic guided pseudo-raycast toward the control point and toward the
/// velocity control point, plus free distance along the velocity.
pub fn kgp_observe(map: &EsdfMap, p: Vec2, v: Vec2, cp: Vec2, horizon: f64) -> KgpObservation {
    let to_cp = cp - p;
    let dist = to_cp.norm();
    let cp_angle = if dist > 1e-12 { to_cp.y.atan2(to_cp.x) } else { 0.0 };
    let speed = v.norm();
    let vel_angle = if speed >= KGP_MIN_SPEED { v.y.atan2(v.x) } else { cp_angle };
    let range = dist.min(horizon);
    // the velocity control point sits at the same distance as the control point
    let o_cp = sector_edges(map, p, cp_angle, range, horizon);
    let o_vcp = sector_edges(map, p, vel_angle, range, horizon);
    let d_vel = march(map, p, unit(vel_angle), horizon).unwrap_or(horizon);
    KgpObservation { o_cp, o_vcp, d_vel }
}

/// ESDF at `p` followed by eight samples on a ring of radius 0.5 m, each
/// clamped to `horizon`. Out-of-map samples read 0.
pub fn esdf_ring_observe(map: &EsdfMap, p: Vec2, horizon: f64) -> [f64; 9] {
    let mut out = [0.0; 9];
    out[0] = map.distance_at(p).min(horizon);
    for k in 0..8 {
        let q = p + unit(k as f64 * std::f64::consts::FRAC_PI_4) * SDF_RING_RADIUS;
        out[k + 1] = map.distance_at(q).min(horizon);
    }
    out
}

/// Target lies inside the camera frustum along the body x axis.
pub fn in_fov(cfg: &EnvConfig, state: &QuadState, target: Vec3) -> bool {
    let rel = state.rotation().transpose() * (target - state.position);
    rel.x > 0.0
        && rel.y.abs().atan2(rel.x) <= cfg.fov_half_angle_h
        && rel.z.abs().atan2(rel.x) <= cfg.fov_half_angle_v
}

/// The control point currently targeted and its successor (repeated at the end).
pub fn observed_targets(cps: &[Vec3], index: usize) -> (Vec3, Vec3) {
    let last = cps.len() - 1;
    let i = index.min(last);
    (cps[i], cps[(i + 1).min(last)])
}

pub fn observe(cfg: &EnvConfig, map: &EsdfMap, state: &QuadState, cps: &[Vec3], index: usize) -> Observation {
    let (cp1, cp2) = observed_targets(cps, index);
    let p = state.position;
    let p2 = p.xy();
    let h = cfg.sensing_horizon;
    let kgp = kgp_observe(map, p2, state.velocity.xy(), cp1.xy(), h);
    let sdf = esdf_ring_observe(map, p2, h);
    let mut o = [0.0; OBS_DIM];
    let mut w = 0;
    let mut put = |xs: &[f64]| {
        o[w..w + xs.len()].copy_from_slice(xs);
        w += xs.len();
    };
    put(state.velocity.as_slice());
    put(state.body_rates.as_slice());
    put(state.attitude.as_slice());
    put(state.heading().as_slice());
    put((cp1 - p).as_slice());
    put((cp2 - p).as_slice());
    put(&kgp.o_cp);
    put(&kgp.o_vcp);
    put(&[kgp.d_vel]);
    put(&sdf);
    debug_assert_eq!(w, OBS_DIM);
    Observation(o)
}

/// `Obstacle` iff the ESDF drops below `clearance` anywhere along the next
/// `horizon` meters of the chain `p → cps[0] → cps[1] → ...`.
pub fn select_policy_model(map: &EsdfMap, p: Vec2, cps: &[Vec2], horizon: f64, clearance: f64) -> PolicyTag {
    let step = map.resolution() / 2.0;
    let mut remaining = horizon;
    let mut a = p;
    if map.distance_at(a) < clearance {
        return PolicyTag::Obstacle;
    }
    for &b in cps {
        let len = (b - a).norm();
        let span = len.min(remaining);
        let n = (span / step).ceil() as usize;
        for i in 1..=n {
            let q = a + (b - a) * ((i as f64 * step).min(span) / len);
            if map.distance_at(q) < clearance {
                return PolicyTag::Obstacle;
            }
        }
        remaining -= span;
        if remaining <= 0.0 {
            break;
        }
        a = b;
    }
    PolicyTag::Free
}
