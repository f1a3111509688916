//! Reference planners used to audit the visibility search.
//!
//! Both are deliberately naive: the visibility graph is built densely over every
//! obstacle corner and solved with O(V²) Dijkstra, and the grid planner is a
//! plain 8-connected A* that forbids diagonal corner cutting.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::gridmap::{CellIndex, EsdfMap, NEIGHBORS_8};
use crate::Vec2;

/// All obstacle corners of the map, row-major.
pub fn corners(map: &EsdfMap) -> Vec<CellIndex> {
    let g = map.grid();
    (0..g.height() as i32)
        .flat_map(|y| (0..g.width() as i32).map(move |x| CellIndex::new(x, y)))
        .filter(|&c| map.is_corner(c))
        .collect()
}

/// Shortest path length over the visibility graph of {start, goal, corners},
/// with edges wherever `visible_check` holds. `None` if the goal is unreachable
/// or an endpoint is blocked.
pub fn visibility_graph_shortest(map: &EsdfMap, start: Vec2, goal: Vec2) -> Option<f64> {
    visibility_graph_path(map, start, goal).map(|p| {
        p.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    })
}

/// Waypoints of the visibility-graph shortest path.
pub fn visibility_graph_path(map: &EsdfMap, start: Vec2, goal: Vec2) -> Option<Vec<Vec2>> {
    let g = map.grid();
    let sc = g.world_to_cell(start);
    let gc = g.world_to_cell(goal);
    if !g.contains(start) || !g.contains(goal) || g.is_occupied(sc) || g.is_occupied(gc) {
        return None;
    }
    if start == goal {
        return Some(vec![start]);
    }
    let mut cells = vec![sc, gc];
    let mut pos = vec![start, goal];
    for c in corners(map) {
        if c != sc && c != gc {
            cells.push(c);
            pos.push(g.cell_center(c));
        }
    }
    let n = cells.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut prev = vec![usize::MAX; n];
    let mut done = vec![false; n];
    dist[0] = 0.0;
    loop {
        let mut u = usize::MAX;
        let mut best = f64::INFINITY;
        for i in 0..n {
            if !done[i] && dist[i] < best {
                best = dist[i];
                u = i;
            }
        }
        if u == usize::MAX {
            return None;
        }
        if u == 1 {
            break;
        }
        done[u] = true;
        for v in 0..n {
            if done[v] || v == u {
                continue;
            }
            let alt = dist[u] + (pos[v] - pos[u]).norm();
            if alt < dist[v] && map.visible_check(cells[u], cells[v]).unwrap_or(false) {
                dist[v] = alt;
                prev[v] = u;
            }
        }
    }
    let mut out = vec![pos[1]];
    let mut cur = 1;
    while prev[cur] != usize::MAX {
        cur = prev[cur];
        out.push(pos[cur]);
    }
    out.reverse();
    Some(out)
}

/// 8-connected grid A* between the cells containing `start` and `goal`, with
/// unit/√2 step costs scaled by resolution. A diagonal step requires both
/// orthogonal neighbors to be free.
pub fn grid_astar_length(map: &EsdfMap, start: Vec2, goal: Vec2) -> Option<f64> {
    let g = map.grid();
    let sc = g.world_to_cell(start);
    let gc = g.world_to_cell(goal);
    if !g.in_bounds(sc) || !g.in_bounds(gc) || g.is_occupied(sc) || g.is_occupied(gc) {
        return None;
    }
    let w = g.width();
    let idx = |c: CellIndex| c.y as usize * w + c.x as usize;
    let res = g.resolution();
    let h = |c: CellIndex| {
        // octile distance, consistent for this move set
        let dx = (c.x - gc.x).abs() as f64;
        let dy = (c.y - gc.y).abs() as f64;
        (dx.max(dy) - dx.min(dy) + std::f64::consts::SQRT_2 * dx.min(dy)) * res
    };
    let mut best = vec![f64::INFINITY; w * g.height()];
    let mut closed = vec![false; w * g.height()];
    let mut heap = BinaryHeap::new();
    best[idx(sc)] = 0.0;
    // f64 ordered via its bit pattern (all values are non-negative)
    heap.push(Reverse((h(sc).to_bits(), 0.0f64.to_bits(), sc.x, sc.y)));
    while let Some(Reverse((_, gbits, x, y))) = heap.pop() {
        let c = CellIndex::new(x, y);
        let gcost = f64::from_bits(gbits);
        if closed[idx(c)] || gcost > best[idx(c)] {
            continue;
        }
        if c == gc {
            return Some(gcost);
        }
        closed[idx(c)] = true;
        for (dx, dy) in NEIGHBORS_8 {
            let n = CellIndex::new(x + dx, y + dy);
            if !g.in_bounds(n) || g.is_occupied(n) {
                continue;
            }
            let diagonal = dx != 0 && dy != 0;
            if diagonal
                && (g.is_occupied(CellIndex::new(x + dx, y)) || g.is_occupied(CellIndex::new(x, y + dy)))
            {
                continue;
            }
            let step = if diagonal { std::f64::consts::SQRT_2 } else { 1.0 } * res;
            let cand = gcost + step;
            if cand < best[idx(n)] {
                best[idx(n)] = cand;
                heap.push(Reverse(((cand + h(n)).to_bits(), cand.to_bits(), n.x, n.y)));
            }
        }
    }
    None
}
