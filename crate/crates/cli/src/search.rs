use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use resc::gridmap::{build_esdf, OccupancyGrid};
use resc::scenario::Scenario;
use resc::search::{oracle, sample_control_points, VisibilitySearch, DEFAULT_CP_SPACING};
use resc::{Error, Result, Vec2};

use crate::Global;

#[derive(Args)]
pub struct SearchArgs {
    /// Occupancy map file (`width height resolution origin_x origin_y` then `#`/`.` rows).
    #[arg(long, conflicts_with = "scenario")]
    map: Option<PathBuf>,
    /// Built-in scenario name or scenario TOML; supplies map, start and goal.
    #[arg(long)]
    scenario: Option<String>,
    /// Start position `x,y` in meters.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    start: Option<Vec2>,
    /// Goal position `x,y` in meters.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    goal: Option<Vec2>,
    /// Obstacle inflation radius for --map, m.
    #[arg(long, default_value_t = 0.0)]
    inflation: f64,
    /// Largest ring radius scanned around an expanded node, cells
    /// [default: the larger map side, which makes the result exact].
    #[arg(long)]
    r_max: Option<i32>,
    /// Control-point spacing, m.
    #[arg(long, default_value_t = DEFAULT_CP_SPACING)]
    spacing: f64,
    /// Also run the visibility-graph and 8-connected A* references.
    #[arg(long)]
    oracle: bool,
}

pub fn parse_point(s: &str) -> std::result::Result<Vec2, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected x,y but got {s:?}"));
    }
    let x: f64 = parts[0].trim().parse().map_err(|_| format!("bad number {:?}", parts[0]))?;
    let y: f64 = parts[1].trim().parse().map_err(|_| format!("bad number {:?}", parts[1]))?;
    if !(x.is_finite() && y.is_finite()) {
        return Err(format!("non-finite point {s:?}"));
    }
    Ok(Vec2::new(x, y))
}

pub fn run(g: &Global, a: SearchArgs) -> Result<()> {
    let (grid, inflation, start, goal): (OccupancyGrid, f64, Option<Vec2>, Option<Vec2>) = match (&a.map, &a.scenario) {
        (Some(p), _) => (OccupancyGrid::load(p)?, a.inflation, None, None),
        (None, Some(name)) => {
            let s = Scenario::resolve(name)?;
            (s.raw_grid()?, s.inflation + s.search_margin, Some(s.start()), Some(s.goal()))
        }
        (None, None) => return Err(Error::InvalidParam("give --map or --scenario".into())),
    };
    let start = a.start.or(start).ok_or_else(|| Error::InvalidParam("--start is required".into()))?;
    let goal = a.goal.or(goal).ok_or_else(|| Error::InvalidParam("--goal is required".into()))?;
    let map = build_esdf(&grid, inflation);

    let t0 = Instant::now();
    let r_max = a.r_max.unwrap_or(grid.width().max(grid.height()) as i32);
    let out = VisibilitySearch::new(r_max).run(&map, start, goal, g.seed.unwrap_or(0))?;
    let wall = t0.elapsed();
    let cps = sample_control_points(&out.path, start, a.spacing, usize::MAX)?;

    println!("length      {:.6} m", out.path.length());
    println!("corners     {}", out.path.waypoints.len().saturating_sub(2));
    println!("expansions  {}", out.stats.expansions);
    println!("wall time   {:.3} ms", wall.as_secs_f64() * 1e3);
    if a.oracle {
        match oracle::visibility_graph_shortest(&map, start, goal) {
            Some(l) => println!("oracle      {l:.6} m (difference {:.3e})", out.path.length() - l),
            None => println!("oracle      unreachable"),
        }
        if let Some(l) = oracle::grid_astar_length(&map, start, goal) {
            println!("grid A*     {l:.6} m");
        }
    }

    let mut csv = String::from("# kind=path\nx,y\n");
    for p in &out.path.waypoints {
        let _ = writeln!(csv, "{},{}", p.x, p.y);
    }
    csv.push_str("# kind=cp\nx,y\n");
    for p in &cps.points {
        let _ = writeln!(csv, "{},{}", p.x, p.y);
    }
    match &g.out {
        Some(p) => std::fs::write(p, csv).map_err(|e| Error::io(p, e))?,
        None => print!("{csv}"),
    }
    Ok(())
}
