//! Visibility path search over obstacle corners.
//!
//! Only obstacle corners (plus start and goal) ever enter the open list. A node
//! is expanded by enumerating Chebyshev rings of radius `1..=r_max` around it and
//! admitting every corner that is directly visible. The goal is accepted as soon
//! as it is visible from a popped node: with a Euclidean heuristic the popped
//! node has minimum `f = g + ‖n − goal‖`, which is then exactly the cost of the
//! path through it.

pub mod oracle;

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gridmap::{CellIndex, EsdfMap};
use crate::Vec2;

pub const DEFAULT_R_MAX: i32 = 16;
pub const DEFAULT_D_TRIGGER: f64 = 3.0;
pub const DEFAULT_CP_SPACING: f64 = 1.0;
pub const DEFAULT_D_HOR: f64 = 0.5;
pub const DEFAULT_D_HGT: f64 = 0.2;

#[derive(Clone, Debug, PartialEq)]
pub struct PathPolyline {
    pub waypoints: Vec<Vec2>,
}

impl PathPolyline {
    pub fn length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    pub fn start(&self) -> Vec2 {
        self.waypoints[0]
    }

    pub fn goal(&self) -> Vec2 {
        *self.waypoints.last().expect("polyline is never empty")
    }

    /// Closest point on the polyline to `p`, as (segment index, arc length).
    pub fn project(&self, p: Vec2) -> (usize, f64) {
        let mut best = (0usize, 0.0f64, f64::INFINITY);
        let mut arc = 0.0;
        for (i, w) in self.waypoints.windows(2).enumerate() {
            let seg = w[1] - w[0];
            let len = seg.norm();
            let t = if len > 0.0 {
                ((p - w[0]).dot(&seg) / (len * len)).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let d = (w[0] + seg * t - p).norm();
            if d < best.2 {
                best = (i, arc + t * len, d);
            }
            arc += len;
        }
        (best.0, best.1)
    }

    /// Point at arc length `s` (clamped to the polyline).
    pub fn point_at(&self, s: f64) -> Vec2 {
        let mut acc = 0.0;
        for w in self.waypoints.windows(2) {
            let len = (w[1] - w[0]).norm();
            if s <= acc + len && len > 0.0 {
                let t = ((s - acc) / len).clamp(0.0, 1.0);
                return w[0] + (w[1] - w[0]) * t;
            }
            acc += len;
        }
        self.goal()
    }
}

/// Ordered control points sampled from a path, with the pass-region geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlPointSequence {
    pub points: Vec<Vec2>,
    /// Pass cylinder radius `d_hor`, m.
    pub pass_radius: f64,
    /// Pass cylinder half-height `d_hgt`, m.
    pub pass_half_height: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub expansions: usize,
    pub visibility_checks: usize,
    pub pushes: usize,
}

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub path: PathPolyline,
    pub stats: SearchStats,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VisibilitySearch {
    /// Largest Chebyshev ring radius enumerated around an expanded node, cells.
    pub r_max: i32,
    /// Distance below which the random goal check always fires, m.
    pub d_trigger: f64,
}

impl Default for VisibilitySearch {
    fn default() -> Self {
        Self {
            r_max: DEFAULT_R_MAX,
            d_trigger: DEFAULT_D_TRIGGER,
        }
    }
}

/// Straight-line distance; admissible and consistent for Euclidean path length.
pub fn heuristic(a: Vec2, b: Vec2) -> f64 {
    (a - b).norm()
}

/// Visibility check toward the goal that fires with probability
/// `min(1, d_trigger / d)`. Returns `None` when it did not fire.
pub fn random_visibility_probe(
    map: &EsdfMap,
    current: CellIndex,
    goal: CellIndex,
    d_trigger: f64,
    rng: &mut impl Rng,
) -> Result<Option<bool>> {
    let g = map.grid();
    let d = (g.cell_center(current) - g.cell_center(goal)).norm();
    let p = if d <= d_trigger { 1.0 } else { d_trigger / d };
    if p >= 1.0 || rng.random::<f64>() < p {
        map.visible_check(current, goal).map(Some)
    } else {
        Ok(None)
    }
}

/// Boolean form of [`random_visibility_probe`]: false when the check did not fire.
pub fn random_visible_check(
    map: &EsdfMap,
    current: CellIndex,
    goal: CellIndex,
    d_trigger: f64,
    rng: &mut impl Rng,
) -> Result<bool> {
    Ok(random_visibility_probe(map, current, goal, d_trigger, rng)?.unwrap_or(false))
}

#[derive(Clone, Copy, Debug)]
struct Node {
    cell: CellIndex,
    g: f64,
    f: f64,
    parent: Option<usize>,
    closed: bool,
}

#[derive(Clone, Copy, Debug)]
struct OpenEntry {
    f: f64,
    h: f64,
    seq: u64,
    node: usize,
    g: f64,
    /// Deferred edge from `node` straight to the goal, checked when popped.
    to_goal: bool,
}

impl PartialEq for OpenEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for OpenEntry {}
impl PartialOrd for OpenEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for OpenEntry {
    // BinaryHeap is a max-heap; reverse so the smallest (f, h, seq) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.h.total_cmp(&self.h))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Visits the cells at Chebyshev distance exactly `r` from `c`.
fn for_each_ring_cell(c: CellIndex, r: i32, mut f: impl FnMut(CellIndex) -> Result<bool>) -> Result<bool> {
    for dx in -r..=r {
        if !f(CellIndex::new(c.x + dx, c.y - r))? {
            return Ok(false);
        }
    }
    for dy in (-r + 1)..=(r - 1) {
        if !f(CellIndex::new(c.x + r, c.y + dy))? {
            return Ok(false);
        }
        if !f(CellIndex::new(c.x - r, c.y + dy))? {
            return Ok(false);
        }
    }
    for dx in -r..=r {
        if !f(CellIndex::new(c.x + dx, c.y + r))? {
            return Ok(false);
        }
    }
    Ok(true)
}

impl VisibilitySearch {
    pub fn new(r_max: i32) -> Self {
        Self {
            r_max,
            ..Self::default()
        }
    }

    pub fn run(&self, map: &EsdfMap, start: Vec2, goal: Vec2, seed: u64) -> Result<SearchOutcome> {
        if self.r_max < 1 {
            return Err(Error::InvalidParam(format!("r_max {} must be ≥ 1", self.r_max)));
        }
        let grid = map.grid();
        let start_cell = grid.world_to_cell(start);
        let goal_cell = grid.world_to_cell(goal);
        for (what, p, c) in [("start", start, start_cell), ("goal", goal, goal_cell)] {
            if !grid.contains(p) {
                return Err(Error::OutOfBounds(c));
            }
            if grid.is_occupied(c) {
                return Err(Error::Occupied { what });
            }
        }
        let mut stats = SearchStats::default();
        if start == goal {
            return Ok(SearchOutcome {
                path: PathPolyline {
                    waypoints: vec![start],
                },
                stats,
            });
        }
        if start_cell == goal_cell {
            return Ok(SearchOutcome {
                path: PathPolyline {
                    waypoints: vec![start, goal],
                },
                stats,
            });
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let goal_center = grid.cell_center(goal_cell);
        let mut nodes: Vec<Node> = Vec::new();
        let mut index: HashMap<CellIndex, usize> = HashMap::new();
        let mut open = BinaryHeap::new();
        let mut seq = 0u64;

        let h0 = heuristic(grid.cell_center(start_cell), goal_center);
        nodes.push(Node {
            cell: start_cell,
            g: 0.0,
            f: h0,
            parent: None,
            closed: false,
        });
        index.insert(start_cell, 0);
        open.push(OpenEntry {
            f: h0,
            h: h0,
            seq,
            node: 0,
            g: 0.0,
            to_goal: false,
        });
        stats.pushes += 1;

        let finish = |nodes: &[Node], last: usize, stats: SearchStats| {
            let mut cells = Vec::new();
            let mut cur = Some(last);
            while let Some(i) = cur {
                cells.push(nodes[i].cell);
                cur = nodes[i].parent;
            }
            cells.reverse();
            let mut waypoints = Vec::with_capacity(cells.len() + 1);
            waypoints.push(start);
            waypoints.extend(cells[1..].iter().map(|&c| grid.cell_center(c)));
            waypoints.push(goal);
            SearchOutcome {
                path: PathPolyline { waypoints },
                stats,
            }
        };

        while let Some(entry) = open.pop() {
            let current = entry.node;
            if entry.to_goal {
                stats.visibility_checks += 1;
                if map.visible_check(nodes[current].cell, goal_cell)? {
                    return Ok(finish(&nodes, current, stats));
                }
                continue;
            }
            if nodes[current].closed || entry.g != nodes[current].g {
                continue;
            }
            nodes[current].closed = true;
            stats.expansions += 1;
            let cur_cell = nodes[current].cell;
            let cur_g = nodes[current].g;
            let cur_center = grid.cell_center(cur_cell);

            let probe = random_visibility_probe(map, cur_cell, goal_cell, self.d_trigger, &mut rng)?;
            if probe.is_some() {
                stats.visibility_checks += 1;
            }
            if probe == Some(true) {
                return Ok(finish(&nodes, current, stats));
            }
            // The ring scan only sees the goal within r_max; past that, keep
            // the direct edge as a deferred candidate so it is never lost.
            if probe.is_none() && cur_cell.chebyshev(goal_cell) > self.r_max {
                let h = heuristic(cur_center, goal_center);
                seq += 1;
                open.push(OpenEntry {
                    f: cur_g + h,
                    h: 0.0,
                    seq,
                    node: current,
                    g: cur_g,
                    to_goal: true,
                });
                stats.pushes += 1;
            }

            let mut reached_goal = false;
            for r in 1..=self.r_max {
                let lo = CellIndex::new(cur_cell.x - r, cur_cell.y - r);
                let hi = CellIndex::new(cur_cell.x + r, cur_cell.y + r);
                if lo.x < 0
                    && lo.y < 0
                    && hi.x >= grid.width() as i32
                    && hi.y >= grid.height() as i32
                {
                    break;
                }
                let completed = for_each_ring_cell(cur_cell, r, |cell| {
                    if !grid.in_bounds(cell) {
                        return Ok(true);
                    }
                    if cell == goal_cell {
                        stats.visibility_checks += 1;
                        if map.visible_check(cur_cell, cell)? {
                            reached_goal = true;
                            return Ok(false);
                        }
                        return Ok(true);
                    }
                    if !map.is_corner(cell) {
                        return Ok(true);
                    }
                    if let Some(&i) = index.get(&cell) {
                        if nodes[i].closed {
                            return Ok(true);
                        }
                    }
                    stats.visibility_checks += 1;
                    if !map.visible_check(cur_cell, cell)? {
                        return Ok(true);
                    }
                    let center = grid.cell_center(cell);
                    let g_temp = cur_g + (center - cur_center).norm();
                    let h = heuristic(center, goal_center);
                    let i = match index.get(&cell) {
                        Some(&i) => {
                            if nodes[i].g <= g_temp {
                                return Ok(true);
                            }
                            i
                        }
                        None => {
                            nodes.push(Node {
                                cell,
                                g: f64::INFINITY,
                                f: f64::INFINITY,
                                parent: None,
                                closed: false,
                            });
                            index.insert(cell, nodes.len() - 1);
                            nodes.len() - 1
                        }
                    };
                    nodes[i].parent = Some(current);
                    nodes[i].g = g_temp;
                    nodes[i].f = g_temp + h;
                    seq += 1;
                    open.push(OpenEntry {
                        f: g_temp + h,
                        h,
                        seq,
                        node: i,
                        g: g_temp,
                        to_goal: false,
                    });
                    stats.pushes += 1;
                    Ok(true)
                })?;
                if !completed {
                    break;
                }
            }
            if reached_goal {
                return Ok(finish(&nodes, current, stats));
            }
        }
        Err(Error::Unreachable)
    }
}

/// Searches with the default goal-check trigger distance.
pub fn visibility_search(
    map: &EsdfMap,
    start: Vec2,
    goal: Vec2,
    r_max: i32,
    seed: u64,
) -> Result<PathPolyline> {
    VisibilitySearch::new(r_max)
        .run(map, start, goal, seed)
        .map(|o| o.path)
}

/// Samples control points along `path` starting from the point nearest to
/// `current`: one every `spacing` meters of arc length, plus every polyline
/// vertex passed on the way, ending at the goal. At most `count` points.
pub fn sample_control_points(
    path: &PathPolyline,
    current: Vec2,
    spacing: f64,
    count: usize,
) -> Result<ControlPointSequence> {
    if !(spacing > 0.0) {
        return Err(Error::InvalidParam(format!("spacing {spacing} must be > 0")));
    }
    if count == 0 {
        return Err(Error::InvalidParam("count must be ≥ 1".into()));
    }
    let seq = |points| ControlPointSequence {
        points,
        pass_radius: DEFAULT_D_HOR,
        pass_half_height: DEFAULT_D_HGT,
    };
    if path.waypoints.len() < 2 {
        return Ok(seq(vec![path.start()]));
    }
    let total = path.length();
    let (_, s0) = path.project(current);
    const EPS: f64 = 1e-9;

    let mut arcs: Vec<f64> = Vec::new();
    let mut k = 1.0;
    while s0 + k * spacing < total - EPS {
        arcs.push(s0 + k * spacing);
        k += 1.0;
    }
    let mut acc = 0.0;
    for w in path.waypoints.windows(2) {
        acc += (w[1] - w[0]).norm();
        if acc > s0 + EPS && acc < total - EPS {
            arcs.push(acc);
        }
    }
    arcs.push(total);
    arcs.sort_by(f64::total_cmp);
    arcs.dedup_by(|a, b| (*a - *b).abs() <= EPS);

    // Vertices map to themselves exactly; spacing samples interpolate.
    let mut vertex_arcs = Vec::with_capacity(path.waypoints.len());
    let mut acc = 0.0;
    vertex_arcs.push(0.0);
    for w in path.waypoints.windows(2) {
        acc += (w[1] - w[0]).norm();
        vertex_arcs.push(acc);
    }
    let points = arcs
        .into_iter()
        .take(count)
        .map(|s| {
            if s >= total - EPS {
                return path.goal();
            }
            match vertex_arcs.iter().position(|&v| (v - s).abs() <= EPS) {
                Some(i) => path.waypoints[i],
                None => path.point_at(s),
            }
        })
        .collect();
    Ok(seq(points))
}
