//! Flight metrics computed from a trace.

use serde::{Deserialize, Serialize};

use crate::gridmap::EsdfMap;
use crate::trace::Trace;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// Seconds from the first row to the final pass (or to the last row on failure).
    pub time_span: f64,
    /// ∫‖jerk‖² dt, m²/s⁵.
    pub energy: f64,
    pub success: bool,
    /// Smallest obstacle distance along the flown positions, m. Infinite without a map.
    pub min_clearance: f64,
    /// Flown distance, m.
    pub path_length: f64,
}

/// Sum of `‖j_k‖²·Δt` over interior rows, with `j_k` the central difference of
/// the acceleration column. Rows must be uniformly spaced in time.
pub fn jerk_energy(trace: &Trace) -> f64 {
    let r = &trace.rows;
    if r.len() < 3 {
        return 0.0;
    }
    let mut e = 0.0;
    for k in 1..r.len() - 1 {
        let span = r[k + 1].t - r[k - 1].t;
        let j = (r[k + 1].acceleration - r[k - 1].acceleration) / span;
        e += j.norm_squared() * span / 2.0;
    }
    e
}

pub fn flown_length(trace: &Trace) -> f64 {
    trace
        .rows
        .windows(2)
        .map(|w| (w[1].position - w[0].position).norm())
        .sum()
}

/// `clearance_map` should be built without inflation so distances are to the
/// obstacle surfaces.
pub fn compute_metrics(trace: &Trace, clearance_map: Option<&EsdfMap>) -> RunMetrics {
    let rows = &trace.rows;
    let t0 = rows.first().map_or(0.0, |r| r.t);
    let finish = rows.iter().position(|r| r.has_event("finish"));
    let end = finish.map_or_else(|| rows.last().map_or(t0, |r| r.t), |i| rows[i].t);
    let success = finish.is_some() && !rows.iter().any(|r| r.has_event("collision"));
    let min_clearance = clearance_map.map_or(f64::INFINITY, |m| {
        rows.iter()
            .map(|r| m.distance_at(r.position.xy()))
            .fold(f64::INFINITY, f64::min)
    });
    RunMetrics {
        time_span: end - t0,
        energy: jerk_energy(trace),
        success,
        min_clearance,
        path_length: flown_length(trace),
    }
}
