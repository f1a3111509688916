//! Static SVG rendering of a flight trace.

use std::fmt::Write as _;

use crate::gridmap::OccupancyGrid;
use crate::trace::Trace;
use crate::{Vec2, Vec3};

const W: f64 = 940.0;
const H: f64 = 480.0;
const PAD: f64 = 20.0;
const COLORS: [&str; 3] = ["#d62728", "#2ca02c", "#1f77b4"];

#[derive(Clone, Copy, Debug)]
pub struct PlotInput<'a> {
    pub trace: &'a Trace,
    /// Raw occupancy to draw under the trajectory.
    pub map: Option<&'a OccupancyGrid>,
    pub path: Option<&'a [Vec2]>,
    pub control_points: &'a [Vec3],
}

struct Frame {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    lo: Vec2,
    hi: Vec2,
}

impl Frame {
    fn map(&self, p: Vec2) -> (f64, f64) {
        let sx = self.w / (self.hi.x - self.lo.x);
        let sy = self.h / (self.hi.y - self.lo.y);
        (self.x0 + (p.x - self.lo.x) * sx, self.y0 + self.h - (p.y - self.lo.y) * sy)
    }
}

fn polyline(out: &mut String, pts: impl Iterator<Item = (f64, f64)>, color: &str, width: f64, dash: bool) {
    let mut d = String::new();
    for (x, y) in pts {
        let _ = write!(d, "{x:.2},{y:.2} ");
    }
    let dash = if dash { " stroke-dasharray=\"4 3\"" } else { "" };
    let _ = writeln!(
        out,
        "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\"{dash}/>",
        d.trim_end()
    );
}

fn bounds(input: &PlotInput) -> (Vec2, Vec2) {
    if let Some(m) = input.map {
        return m.bounds();
    }
    let mut lo = Vec2::repeat(f64::INFINITY);
    let mut hi = Vec2::repeat(f64::NEG_INFINITY);
    let pts = input
        .trace
        .rows
        .iter()
        .map(|r| r.position.xy())
        .chain(input.control_points.iter().map(|c| c.xy()))
        .chain(input.path.unwrap_or(&[]).iter().copied());
    for p in pts {
        lo = lo.inf(&p);
        hi = hi.sup(&p);
    }
    if !lo.x.is_finite() {
        return (Vec2::zeros(), Vec2::new(1.0, 1.0));
    }
    let margin = 0.5;
    (lo - Vec2::repeat(margin), hi + Vec2::repeat(margin))
}

fn top_down(out: &mut String, input: &PlotInput, x0: f64, y0: f64, size: f64) {
    let (mut lo, mut hi) = bounds(input);
    // equal aspect: grow the shorter side
    let span = (hi - lo).max();
    let c = (lo + hi) / 2.0;
    lo = c - Vec2::repeat(span / 2.0);
    hi = c + Vec2::repeat(span / 2.0);
    let f = Frame { x0, y0, w: size, h: size, lo, hi };
    let _ = writeln!(
        out,
        "<rect x=\"{x0}\" y=\"{y0}\" width=\"{size}\" height=\"{size}\" fill=\"#ffffff\" stroke=\"#444\"/>"
    );
    if let Some(m) = input.map {
        let res = m.resolution();
        for y in 0..m.height() {
            let mut x = 0;
            while x < m.width() {
                let cell = crate::gridmap::CellIndex::new(x as i32, y as i32);
                if !m.is_occupied(cell) {
                    x += 1;
                    continue;
                }
                let start = x;
                while x < m.width() && m.is_occupied(crate::gridmap::CellIndex::new(x as i32, y as i32)) {
                    x += 1;
                }
                let o = m.origin();
                let (ax, ay) = f.map(Vec2::new(o.x + start as f64 * res, o.y + (y + 1) as f64 * res));
                let (bx, by) = f.map(Vec2::new(o.x + x as f64 * res, o.y + y as f64 * res));
                let _ = writeln!(
                    out,
                    "<rect x=\"{ax:.2}\" y=\"{ay:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#555\"/>",
                    bx - ax,
                    by - ay
                );
            }
        }
    }
    if let Some(p) = input.path {
        polyline(out, p.iter().map(|q| f.map(*q)), "#888", 1.5, true);
    }
    for cp in input.control_points {
        let (x, y) = f.map(cp.xy());
        let _ = writeln!(out, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"none\" stroke=\"#ff7f0e\"/>");
    }
    polyline(out, input.trace.rows.iter().map(|r| f.map(r.position.xy())), "#1f77b4", 1.5, false);
    for r in &input.trace.rows {
        let (x, y) = f.map(r.position.xy());
        if r.has_event("pass") {
            let _ = writeln!(out, "<circle class=\"pass\" cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"4\" fill=\"#2ca02c\"/>");
        }
        if r.has_event("collision") || r.has_event("out_of_bounds") || r.has_event("attitude") {
            let _ = writeln!(out, "<circle class=\"crash\" cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"5\" fill=\"#d62728\"/>");
        }
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\">top-down trajectory (x {:.1}..{:.1} m, y {:.1}..{:.1} m)</text>",
        x0,
        y0 - 6.0,
        lo.x,
        hi.x,
        lo.y,
        hi.y
    );
}

fn series(out: &mut String, trace: &Trace, title: &str, names: [&str; 3], get: impl Fn(usize) -> Vec3, frame: (f64, f64, f64, f64)) {
    let (x0, y0, w, h) = frame;
    let rows = &trace.rows;
    let _ = writeln!(
        out,
        "<rect x=\"{x0}\" y=\"{y0}\" width=\"{w}\" height=\"{h}\" fill=\"#ffffff\" stroke=\"#444\"/>"
    );
    let t0 = rows.first().map_or(0.0, |r| r.t);
    let t1 = rows.last().map_or(1.0, |r| r.t).max(t0 + 1e-9);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..rows.len() {
        for v in get(i).iter() {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
    }
    if !lo.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    if hi - lo < 1e-9 {
        lo -= 0.5;
        hi += 0.5;
    }
    let f = Frame {
        x0,
        y0,
        w,
        h,
        lo: Vec2::new(t0, lo),
        hi: Vec2::new(t1, hi),
    };
    if lo < 0.0 && hi > 0.0 {
        let (ax, ay) = f.map(Vec2::new(t0, 0.0));
        let (bx, _) = f.map(Vec2::new(t1, 0.0));
        let _ = writeln!(out, "<line x1=\"{ax:.2}\" y1=\"{ay:.2}\" x2=\"{bx:.2}\" y2=\"{ay:.2}\" stroke=\"#ccc\"/>");
    }
    for r in rows.iter().filter(|r| r.has_event("pass")) {
        let (x, _) = f.map(Vec2::new(r.t, lo));
        let _ = writeln!(
            out,
            "<line class=\"pass\" x1=\"{x:.2}\" y1=\"{y0:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"#2ca02c\" stroke-dasharray=\"2 2\"/>",
            y0 + h
        );
    }
    for (k, name) in names.iter().enumerate() {
        polyline(out, (0..rows.len()).map(|i| f.map(Vec2::new(rows[i].t, get(i)[k]))), COLORS[k], 1.2, false);
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" fill=\"{}\">{name}</text>",
            x0 + w - 90.0 + 30.0 * k as f64,
            y0 - 6.0,
            COLORS[k]
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{x0}\" y=\"{:.2}\" font-size=\"12\">{title} [{lo:.2}, {hi:.2}]</text>",
        y0 - 6.0
    );
    let _ = writeln!(
        out,
        "<text x=\"{x0}\" y=\"{:.2}\" font-size=\"10\">t = {t0:.2} .. {t1:.2} s</text>",
        y0 + h + 12.0
    );
}

/// Top-down track plus velocity, body-rate and attitude time series.
pub fn render_svg(input: &PlotInput) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\">"
    );
    let _ = writeln!(out, "<rect width=\"{W}\" height=\"{H}\" fill=\"#fafafa\"/>");
    let size = H - 2.0 * PAD - 10.0;
    top_down(&mut out, input, PAD, PAD + 10.0, size);
    let x0 = 2.0 * PAD + size + 10.0;
    let w = W - x0 - PAD;
    let h = (size - 2.0 * 30.0) / 3.0;
    let tr = input.trace;
    let panels: [(&str, [&str; 3], Box<dyn Fn(usize) -> Vec3>); 3] = [
        ("velocity (m/s)", ["vx", "vy", "vz"], Box::new(|i| tr.rows[i].velocity)),
        ("body rates (rad/s)", ["wx", "wy", "wz"], Box::new(|i| tr.rows[i].body_rates)),
        ("attitude (rad)", ["roll", "pitch", "yaw"], Box::new(|i| tr.rows[i].attitude)),
    ];
    for (k, (title, names, get)) in panels.into_iter().enumerate() {
        let y0 = PAD + 10.0 + k as f64 * (h + 30.0);
        series(&mut out, tr, title, names, get, (x0, y0, w, h));
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::TraceRow;

    fn tiny() -> Trace {
        Trace {
            rows: (0..3)
                .map(|k| TraceRow {
                    t: k as f64 * 0.02,
                    position: Vec3::new(k as f64 * 0.1, 0.0, 1.0),
                    velocity: Vec3::new(5.0, 0.0, 0.0),
                    acceleration: Vec3::zeros(),
                    attitude: Vec3::zeros(),
                    body_rates: Vec3::zeros(),
                    thrust: 16.0,
                    reward: 0.0,
                    event: if k == 1 { "pass:0".into() } else { String::new() },
                })
                .collect(),
        }
    }

    #[test]
    fn minimal_trace_renders() {
        let tr = tiny();
        let svg = render_svg(&PlotInput {
            trace: &tr,
            map: None,
            path: None,
            control_points: &[],
        });
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
        // one marker in the track, one line per time series panel
        assert_eq!(svg.matches("class=\"pass\"").count(), 4);
    }
}
