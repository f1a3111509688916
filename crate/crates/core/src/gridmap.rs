//! 2D occupancy grid and exact Euclidean distance field.
//!
//! Cell `(x, y)` covers the square `[origin + (x, y)·res, origin + (x+1, y+1)·res)`.
//! Distances are measured between cell centers, so every value in the field is
//! `res·sqrt(k)` for an integer `k`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::Vec2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellIndex {
    pub x: i32,
    pub y: i32,
}

impl CellIndex {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn chebyshev(self, other: CellIndex) -> i32 {
        (self.x - other.x).abs().max((self.y - other.y).abs())
    }
}

/// Offsets of the 8-neighborhood, counter-clockwise from +x.
pub const NEIGHBORS_8: [(i32, i32); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyGrid {
    width: usize,
    height: usize,
    resolution: f64,
    origin: Vec2,
    cells: Vec<bool>,
}

impl OccupancyGrid {
    /// An all-free grid.
    pub fn new(width: usize, height: usize, resolution: f64, origin: Vec2) -> Result<Self> {
        Self::from_cells(width, height, resolution, origin, vec![false; width * height])
    }

    /// `cells` is row-major with row 0 at minimum y.
    pub fn from_cells(
        width: usize,
        height: usize,
        resolution: f64,
        origin: Vec2,
        cells: Vec<bool>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidMap(format!("empty grid {width}x{height}")));
        }
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::InvalidMap(format!("resolution {resolution} must be > 0")));
        }
        if !(origin.x.is_finite() && origin.y.is_finite()) {
            return Err(Error::InvalidMap("non-finite origin".into()));
        }
        if cells.len() != width * height {
            return Err(Error::InvalidMap(format!(
                "expected {} cells, got {}",
                width * height,
                cells.len()
            )));
        }
        Ok(Self {
            width,
            height,
            resolution,
            origin,
            cells,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> Vec2 {
        self.origin
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    /// World-frame extent `(min, max)` of the mapped area.
    pub fn bounds(&self) -> (Vec2, Vec2) {
        let size = Vec2::new(self.width as f64, self.height as f64) * self.resolution;
        (self.origin, self.origin + size)
    }

    pub fn in_bounds(&self, c: CellIndex) -> bool {
        c.x >= 0 && c.y >= 0 && (c.x as usize) < self.width && (c.y as usize) < self.height
    }

    fn index(&self, c: CellIndex) -> usize {
        c.y as usize * self.width + c.x as usize
    }

    /// Cells outside the map read as free.
    pub fn is_occupied(&self, c: CellIndex) -> bool {
        self.in_bounds(c) && self.cells[self.index(c)]
    }

    pub fn set(&mut self, c: CellIndex, occupied: bool) {
        if self.in_bounds(c) {
            let i = self.index(c);
            self.cells[i] = occupied;
        }
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|&&o| o).count()
    }

    pub fn world_to_cell(&self, p: Vec2) -> CellIndex {
        let rel = (p - self.origin) / self.resolution;
        CellIndex::new(rel.x.floor() as i32, rel.y.floor() as i32)
    }

    pub fn cell_center(&self, c: CellIndex) -> Vec2 {
        self.origin + Vec2::new(c.x as f64 + 0.5, c.y as f64 + 0.5) * self.resolution
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let (lo, hi) = self.bounds();
        p.x >= lo.x && p.y >= lo.y && p.x < hi.x && p.y < hi.y
    }

    /// Marks every cell whose center lies within `radius` of `center`.
    pub fn fill_disc(&mut self, center: Vec2, radius: f64) {
        let lo = self.world_to_cell(center - Vec2::repeat(radius));
        let hi = self.world_to_cell(center + Vec2::repeat(radius));
        for y in lo.y..=hi.y {
            for x in lo.x..=hi.x {
                let c = CellIndex::new(x, y);
                if (self.cell_center(c) - center).norm() <= radius {
                    self.set(c, true);
                }
            }
        }
    }

    /// Marks every cell whose center lies inside the axis-aligned box.
    pub fn fill_box(&mut self, min: Vec2, max: Vec2) {
        let lo = self.world_to_cell(min);
        let hi = self.world_to_cell(max);
        for y in lo.y..=hi.y {
            for x in lo.x..=hi.x {
                let c = CellIndex::new(x, y);
                let p = self.cell_center(c);
                if p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y {
                    self.set(c, true);
                }
            }
        }
    }

    /// Parses the plain-text map format: a header `width height resolution
    /// origin_x origin_y` followed by `height` rows of `#`/`.`, first row at
    /// minimum y.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (hline, header) = lines.next().ok_or(Error::MapParse {
            line: 1,
            msg: "missing header".into(),
        })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(Error::MapParse {
                line: hline + 1,
                msg: format!("header needs 5 fields, found {}", fields.len()),
            });
        }
        let bad = |msg: String| Error::MapParse {
            line: hline + 1,
            msg,
        };
        let width: usize = fields[0].parse().map_err(|e| bad(format!("width: {e}")))?;
        let height: usize = fields[1].parse().map_err(|e| bad(format!("height: {e}")))?;
        let res: f64 = fields[2].parse().map_err(|e| bad(format!("resolution: {e}")))?;
        let ox: f64 = fields[3].parse().map_err(|e| bad(format!("origin_x: {e}")))?;
        let oy: f64 = fields[4].parse().map_err(|e| bad(format!("origin_y: {e}")))?;

        let mut cells = Vec::with_capacity(width * height);
        let mut rows = 0;
        for (lineno, line) in lines {
            let row = line.trim_end();
            if rows == height {
                return Err(Error::MapParse {
                    line: lineno + 1,
                    msg: format!("more than {height} rows"),
                });
            }
            if row.chars().count() != width {
                return Err(Error::MapParse {
                    line: lineno + 1,
                    msg: format!("row has {} cells, expected {width}", row.chars().count()),
                });
            }
            for ch in row.chars() {
                match ch {
                    '#' => cells.push(true),
                    '.' => cells.push(false),
                    other => {
                        return Err(Error::MapParse {
                            line: lineno + 1,
                            msg: format!("unexpected character {other:?}"),
                        })
                    }
                }
            }
            rows += 1;
        }
        if rows != height {
            return Err(Error::MapParse {
                line: text.lines().count(),
                msg: format!("expected {height} rows, found {rows}"),
            });
        }
        Self::from_cells(width, height, res, Vec2::new(ox, oy), cells)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{} {} {} {} {}\n",
            self.width, self.height, self.resolution, self.origin.x, self.origin.y
        );
        for row in self.cells.chunks(self.width) {
            for &c in row {
                out.push(if c { '#' } else { '.' });
            }
            out.push('\n');
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

/// Unsigned Euclidean distance field over an (inflated) occupancy grid.
#[derive(Clone, Debug)]
pub struct EsdfMap {
    grid: OccupancyGrid,
    raw: OccupancyGrid,
    distance: Vec<f64>,
    inflation_radius: f64,
}

/// Result of a continuous distance query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EsdfQuery {
    pub distance: f64,
    pub in_bounds: bool,
}

const FAR: f64 = 1e30;

/// One-dimensional squared distance transform (lower envelope of parabolas).
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let intersect = |q: usize, p: usize| {
        ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64)
    };
    for q in 1..n {
        let mut s = intersect(q, v[k]);
        // z[0] is -inf, so this stops at k == 0
        while s <= z[k] {
            k -= 1;
            s = intersect(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let d = q as f64 - p as f64;
        *o = d * d + f[p];
    }
}

/// Squared distance (in cells²) from every cell center to the nearest occupied center.
fn squared_edt(grid: &OccupancyGrid) -> Vec<f64> {
    let (w, h) = (grid.width, grid.height);
    let mut d2: Vec<f64> = grid
        .cells
        .iter()
        .map(|&o| if o { 0.0 } else { FAR })
        .collect();
    let n = w.max(h);
    let mut f = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];

    for x in 0..w {
        for y in 0..h {
            f[y] = d2[y * w + x];
        }
        edt_1d(&f[..h], &mut out[..h], &mut v, &mut z);
        for y in 0..h {
            d2[y * w + x] = out[y];
        }
    }
    for y in 0..h {
        let row = &mut d2[y * w..(y + 1) * w];
        f[..w].copy_from_slice(row);
        edt_1d(&f[..w], &mut out[..w], &mut v, &mut z);
        row.copy_from_slice(&out[..w]);
    }
    d2
}

fn distance_field(grid: &OccupancyGrid) -> Vec<f64> {
    let sentinel = grid.resolution * (grid.width + grid.height) as f64;
    if grid.occupied_count() == 0 {
        return vec![sentinel; grid.width * grid.height];
    }
    squared_edt(grid)
        .into_iter()
        .map(|d2| d2.sqrt() * grid.resolution)
        .collect()
}

/// Builds the distance field after inflating occupancy by `inflation_radius`
/// (every cell whose center is within the radius of an occupied center becomes
/// occupied).
pub fn build_esdf(grid: &OccupancyGrid, inflation_radius: f64) -> EsdfMap {
    let inflation_radius = inflation_radius.max(0.0);
    let mut inflated = grid.clone();
    if inflation_radius > 0.0 && grid.occupied_count() > 0 {
        let raw_distance = distance_field(grid);
        for (cell, d) in inflated.cells.iter_mut().zip(&raw_distance) {
            if *d <= inflation_radius + 1e-9 {
                *cell = true;
            }
        }
    }
    let distance = distance_field(&inflated);
    EsdfMap {
        grid: inflated,
        raw: grid.clone(),
        distance,
        inflation_radius,
    }
}

impl EsdfMap {
    /// The inflated occupancy layer that search and collision checks use.
    pub fn grid(&self) -> &OccupancyGrid {
        &self.grid
    }

    pub fn raw_grid(&self) -> &OccupancyGrid {
        &self.raw
    }

    pub fn inflation_radius(&self) -> f64 {
        self.inflation_radius
    }

    pub fn resolution(&self) -> f64 {
        self.grid.resolution
    }

    /// Value stored for obstacle-free maps.
    pub fn sentinel(&self) -> f64 {
        self.grid.resolution * (self.grid.width + self.grid.height) as f64
    }

    pub fn distances(&self) -> &[f64] {
        &self.distance
    }

    /// Stored distance at a cell center; `None` outside the map.
    pub fn cell_distance(&self, c: CellIndex) -> Option<f64> {
        self.grid
            .in_bounds(c)
            .then(|| self.distance[self.grid.index(c)])
    }

    pub fn is_occupied(&self, c: CellIndex) -> bool {
        self.grid.is_occupied(c)
    }

    /// Bilinear interpolation of cell-center distances. Points outside the map
    /// read 0.0 with `in_bounds == false`.
    pub fn esdf_at(&self, p: Vec2) -> EsdfQuery {
        if !self.grid.contains(p) {
            return EsdfQuery {
                distance: 0.0,
                in_bounds: false,
            };
        }
        let g = &self.grid;
        let rel = (p - g.origin) / g.resolution - Vec2::repeat(0.5);
        let axis = |u: f64, n: usize| -> (usize, usize, f64) {
            if n == 1 {
                return (0, 0, 0.0);
            }
            let u = u.clamp(0.0, (n - 1) as f64);
            let i0 = (u.floor() as usize).min(n - 2);
            (i0, i0 + 1, u - i0 as f64)
        };
        let (x0, x1, tx) = axis(rel.x, g.width);
        let (y0, y1, ty) = axis(rel.y, g.height);
        let at = |x: usize, y: usize| self.distance[y * g.width + x];
        let bottom = at(x0, y0) * (1.0 - tx) + at(x1, y0) * tx;
        let top = at(x0, y1) * (1.0 - tx) + at(x1, y1) * tx;
        EsdfQuery {
            distance: bottom * (1.0 - ty) + top * ty,
            in_bounds: true,
        }
    }

    /// Distance at `p`, with out-of-map positions reading 0.0.
    pub fn distance_at(&self, p: Vec2) -> f64 {
        self.esdf_at(p).distance
    }

    /// True iff no cell of the supercover segment between the two cell centers
    /// is occupied (both endpoints included).
    pub fn visible_check(&self, a: CellIndex, b: CellIndex) -> Result<bool> {
        for c in [a, b] {
            if !self.grid.in_bounds(c) {
                return Err(Error::OutOfBounds(c));
            }
        }
        Ok(supercover(a, b, |c| !self.grid.is_occupied(c)))
    }

    /// A free cell sitting diagonally off a convex obstacle vertex: some
    /// diagonal neighbor is occupied while the two cells flanking that diagonal
    /// are free. Around an isolated obstacle these are exactly the free cells
    /// with a single occupied 8-neighbor; unlike that count, the rule still
    /// fires inside one-cell gaps between obstacles.
    ///
    /// Cells outside the map are never corners; neighbors outside count as free.
    pub fn is_corner(&self, c: CellIndex) -> bool {
        if !self.grid.in_bounds(c) || self.grid.is_occupied(c) {
            return false;
        }
        let occ = |dx: i32, dy: i32| self.grid.is_occupied(CellIndex::new(c.x + dx, c.y + dy));
        [(1, 1), (-1, 1), (-1, -1), (1, -1)]
            .iter()
            .any(|&(dx, dy)| occ(dx, dy) && !occ(dx, 0) && !occ(0, dy))
    }

    /// Number of occupied 8-neighbors of `c` (outside cells count as free).
    pub fn occupied_neighbors(&self, c: CellIndex) -> usize {
        NEIGHBORS_8
            .iter()
            .filter(|(dx, dy)| self.grid.is_occupied(CellIndex::new(c.x + dx, c.y + dy)))
            .count()
    }

    /// Renders the inflated occupancy as a map file body.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "{}", self.grid.to_text());
        s
    }
}

/// Walks every cell touched by the segment between the centers of `a` and `b`,
/// stopping early when `visit` returns false. When the segment passes exactly
/// through a lattice corner, both side cells are visited as well.
///
/// Returns true if the walk completed.
pub fn supercover(a: CellIndex, b: CellIndex, mut visit: impl FnMut(CellIndex) -> bool) -> bool {
    let nx = (b.x - a.x).unsigned_abs() as i64;
    let ny = (b.y - a.y).unsigned_abs() as i64;
    let sx = (b.x - a.x).signum();
    let sy = (b.y - a.y).signum();
    let (mut x, mut y) = (a.x, a.y);
    if !visit(CellIndex::new(x, y)) {
        return false;
    }
    let (mut ix, mut iy) = (0i64, 0i64);
    while ix < nx || iy < ny {
        // Compare the parametric crossing of the next vertical vs. horizontal grid line.
        let decision = (1 + 2 * ix) * ny - (1 + 2 * iy) * nx;
        if decision == 0 {
            if !visit(CellIndex::new(x + sx, y)) || !visit(CellIndex::new(x, y + sy)) {
                return false;
            }
            x += sx;
            y += sy;
            ix += 1;
            iy += 1;
        } else if decision < 0 {
            x += sx;
            ix += 1;
        } else {
            y += sy;
            iy += 1;
        }
        if !visit(CellIndex::new(x, y)) {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(w: usize, h: usize, occupied: &[(i32, i32)]) -> OccupancyGrid {
        let mut g = OccupancyGrid::new(w, h, 0.1, Vec2::zeros()).unwrap();
        for &(x, y) in occupied {
            g.set(CellIndex::new(x, y), true);
        }
        g
    }

    fn brute_force(g: &OccupancyGrid) -> Vec<f64> {
        let occ: Vec<CellIndex> = (0..g.height() as i32)
            .flat_map(|y| (0..g.width() as i32).map(move |x| CellIndex::new(x, y)))
            .filter(|&c| g.is_occupied(c))
            .collect();
        (0..g.height() as i32)
            .flat_map(|y| (0..g.width() as i32).map(move |x| CellIndex::new(x, y)))
            .map(|c| {
                occ.iter()
                    .map(|o| {
                        let dx = (c.x - o.x) as f64;
                        let dy = (c.y - o.y) as f64;
                        (dx * dx + dy * dy).sqrt() * g.resolution()
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    #[test]
    fn single_obstacle_distance() {
        let g = grid(11, 11, &[(5, 5)]);
        let m = build_esdf(&g, 0.0);
        let d = m.cell_distance(CellIndex::new(5, 8)).unwrap();
        assert!((d - 0.3).abs() < 1e-12, "{d}");
        assert_eq!(m.cell_distance(CellIndex::new(5, 5)), Some(0.0));
    }

    #[test]
    fn free_grid_reads_sentinel() {
        let g = grid(7, 4, &[]);
        let m = build_esdf(&g, 0.5);
        let sentinel = 0.1 * 11.0;
        assert!(m.distances().iter().all(|&d| d == sentinel));
        assert_eq!(m.sentinel(), sentinel);
    }

    #[test]
    fn matches_brute_force_small() {
        let g = grid(13, 9, &[(0, 0), (12, 8), (6, 4), (6, 5), (3, 7)]);
        let m = build_esdf(&g, 0.0);
        for (a, b) in m.distances().iter().zip(brute_force(&g)) {
            assert_eq!(*a, b);
        }
    }

    #[test]
    fn inflation_marks_cells_within_radius() {
        let g = grid(11, 11, &[(5, 5)]);
        let m = build_esdf(&g, 0.2);
        assert!(m.is_occupied(CellIndex::new(5, 7)));
        assert!(m.is_occupied(CellIndex::new(6, 6)));
        assert!(!m.is_occupied(CellIndex::new(7, 6)));
        // nearest inflated cell to (5,9) is (5,7)
        let d = m.cell_distance(CellIndex::new(5, 9)).unwrap();
        assert!((d - 0.2).abs() < 1e-12);
    }

    #[test]
    fn visibility_basic() {
        let m = build_esdf(&grid(11, 3, &[(5, 0)]), 0.0);
        let a = CellIndex::new(0, 0);
        assert!(m.visible_check(a, a).unwrap());
        assert!(!m.visible_check(a, CellIndex::new(10, 0)).unwrap());
        assert!(m.visible_check(CellIndex::new(0, 1), CellIndex::new(10, 1)).unwrap());
        assert!(matches!(
            m.visible_check(a, CellIndex::new(11, 0)),
            Err(Error::OutOfBounds(_))
        ));
    }

    #[test]
    fn diagonal_corner_cutting_is_blocked() {
        // Two diagonally touching occupied cells; the diagonal between the
        // other two must not squeeze through.
        let m = build_esdf(&grid(2, 2, &[(1, 0), (0, 1)]), 0.0);
        assert!(!m
            .visible_check(CellIndex::new(0, 0), CellIndex::new(1, 1))
            .unwrap());
        let m = build_esdf(&grid(2, 2, &[(1, 0)]), 0.0);
        assert!(!m
            .visible_check(CellIndex::new(0, 0), CellIndex::new(1, 1))
            .unwrap());
    }

    #[test]
    fn corners_of_block() {
        let mut occ = Vec::new();
        for x in 4..7 {
            for y in 4..7 {
                occ.push((x, y));
            }
        }
        let m = build_esdf(&grid(11, 11, &occ), 0.0);
        assert!(m.is_corner(CellIndex::new(3, 3)));
        assert!(m.is_corner(CellIndex::new(7, 7)));
        assert!(!m.is_corner(CellIndex::new(3, 5)));
        assert!(!m.is_corner(CellIndex::new(0, 0)));
        assert!(!m.is_corner(CellIndex::new(5, 5)));
        let count = (0..11)
            .flat_map(|y| (0..11).map(move |x| CellIndex::new(x, y)))
            .filter(|&c| m.is_corner(c))
            .count();
        assert_eq!(count, 4);
    }

    #[test]
    fn interpolation() {
        let m = build_esdf(&grid(11, 11, &[(5, 5)]), 0.0);
        let c = CellIndex::new(5, 7);
        let q = m.esdf_at(m.grid().cell_center(c));
        assert!(q.in_bounds);
        assert!((q.distance - 0.2).abs() < 1e-12);
        let mid = (m.grid().cell_center(CellIndex::new(5, 7))
            + m.grid().cell_center(CellIndex::new(5, 9)))
            / 2.0;
        assert!((m.distance_at(mid) - 0.3).abs() < 1e-12);
        let out = m.esdf_at(Vec2::new(-0.01, 0.5));
        assert_eq!(out.distance, 0.0);
        assert!(!out.in_bounds);
    }

    #[test]
    fn map_text_round_trip() {
        let text = "4 3 0.25 -1 2\n#...\n.#..\n...#\n";
        let g = OccupancyGrid::parse(text).unwrap();
        assert!(g.is_occupied(CellIndex::new(0, 0)));
        assert!(g.is_occupied(CellIndex::new(3, 2)));
        assert_eq!(g.origin(), Vec2::new(-1.0, 2.0));
        assert_eq!(OccupancyGrid::parse(&g.to_text()).unwrap(), g);
    }

    #[test]
    fn map_parse_errors_carry_line() {
        let err = OccupancyGrid::parse("3 2 0.1 0 0\n...\n.x.\n").unwrap_err();
        assert!(matches!(err, Error::MapParse { line: 3, .. }), "{err}");
        let err = OccupancyGrid::parse("3 2 0.1 0 0\n...\n").unwrap_err();
        assert!(matches!(err, Error::MapParse { .. }));
        assert!(OccupancyGrid::parse("0 2 0.1 0 0\n").is_err());
    }

    #[test]
    fn world_cell_round_trip() {
        let g = OccupancyGrid::new(20, 10, 0.2, Vec2::new(-2.0, -1.0)).unwrap();
        for x in 0..20 {
            for y in 0..10 {
                let c = CellIndex::new(x, y);
                assert_eq!(g.world_to_cell(g.cell_center(c)), c);
            }
        }
    }
}
