use std::time::Instant;

use clap::Args;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use resc::gridmap::{build_esdf, CellIndex, EsdfMap, OccupancyGrid};
use resc::search::{oracle, VisibilitySearch};
use resc::{Result, Vec2};

use crate::Global;

#[derive(Args)]
pub struct BenchArgs {
    /// Number of random maps (one query each).
    #[arg(long, default_value_t = 100)]
    queries: usize,
    /// Map side length, cells.
    #[arg(long, default_value_t = 40)]
    size: usize,
    /// Upper bound on occupied fraction.
    #[arg(long, default_value_t = 0.2)]
    density: f64,
    /// Ring radius; defaults to the map size so results are exact.
    #[arg(long)]
    r_max: Option<i32>,
    /// Compare every path against the visibility-graph reference.
    #[arg(long)]
    verify: bool,
}

fn random_grid(size: usize, density: f64, rng: &mut impl Rng) -> OccupancyGrid {
    let mut g = OccupancyGrid::new(size, size, 0.1, Vec2::zeros()).expect("positive size");
    let limit = (density * (size * size) as f64) as usize;
    for _ in 0..200 {
        let (w, h) = (rng.random_range(1..=7), rng.random_range(1..=7));
        let (x0, y0) = (rng.random_range(0..size as i32), rng.random_range(0..size as i32));
        let mut trial = g.clone();
        for x in x0..x0 + w {
            for y in y0..y0 + h {
                trial.set(CellIndex::new(x, y), true);
            }
        }
        if trial.occupied_count() <= limit {
            g = trial;
        }
    }
    g
}

fn free_point(map: &EsdfMap, rng: &mut impl Rng) -> Vec2 {
    let g = map.grid();
    loop {
        let c = CellIndex::new(rng.random_range(0..g.width() as i32), rng.random_range(0..g.height() as i32));
        if !g.is_occupied(c) {
            return g.cell_center(c);
        }
    }
}

pub fn run(g: &Global, a: BenchArgs) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(g.seed.unwrap_or(0));
    let search = VisibilitySearch::new(a.r_max.unwrap_or(a.size as i32));
    let mut times = Vec::with_capacity(a.queries);
    let (mut solved, mut mismatches) = (0, 0);
    while times.len() < a.queries {
        let map = build_esdf(&random_grid(a.size, a.density, &mut rng), 0.0);
        let (s, t) = (free_point(&map, &mut rng), free_point(&map, &mut rng));
        let t0 = Instant::now();
        let res = search.run(&map, s, t, rng.random());
        times.push(t0.elapsed().as_secs_f64() * 1e3);
        if let Ok(out) = res {
            solved += 1;
            if a.verify {
                let want = oracle::visibility_graph_shortest(&map, s, t).unwrap_or(f64::NAN);
                if (out.path.length() - want).abs() > 1e-9 {
                    mismatches += 1;
                }
            }
        }
    }
    if times.is_empty() {
        println!("no queries");
        return Ok(());
    }
    times.sort_by(f64::total_cmp);
    let pct = |q: f64| times[((times.len() - 1) as f64 * q).round() as usize];
    let mean = times.iter().sum::<f64>() / times.len() as f64;
    println!("queries   {} ({} solvable)", times.len(), solved);
    println!("mean      {mean:.3} ms");
    println!("p50       {:.3} ms", pct(0.5));
    println!("p95       {:.3} ms", pct(0.95));
    println!("max       {:.3} ms", pct(1.0));
    if a.verify {
        println!("mismatch  {mismatches}");
    }
    Ok(())
}
