use std::path::PathBuf;

use clap::Args;
use resc::env::EnvConfig;
use resc::fly::{fly, FlyOptions, ModelChoice, PolicySet};
use resc::gridmap::build_esdf;
use resc::metrics::{compute_metrics, RunMetrics};
use resc::scenario::Scenario;
use resc::trace::Trace;
use resc::{Error, Result};

use crate::Global;

#[derive(Args)]
pub struct FlyArgs {
    /// Built-in scenario (corridor, slalom, dense-block, gap) or a scenario TOML.
    #[arg(long)]
    scenario: String,
    /// Directory holding free.json and obstacle.json.
    #[arg(long, default_value = "checkpoints")]
    checkpoints: PathBuf,
    /// auto, free or obstacle.
    #[arg(long, default_value = "auto")]
    model: ModelChoice,
    /// Re-search from the current position every N control steps.
    #[arg(long)]
    replan_every: Option<usize>,
    /// Control-point spacing, m.
    #[arg(long)]
    spacing: Option<f64>,
    /// Recompute metrics from an existing trace instead of flying.
    #[arg(long)]
    from_trace: Option<PathBuf>,
}

fn print_metrics(m: &RunMetrics) {
    println!("success        {}", m.success);
    println!("time_span      {} s", m.time_span);
    println!("energy         {} m^2/s^5", m.energy);
    println!("min_clearance  {} m", m.min_clearance);
    println!("path_length    {} m", m.path_length);
}

pub fn run(g: &Global, a: FlyArgs) -> Result<()> {
    let scenario = Scenario::resolve(&a.scenario)?;
    if let Some(p) = &a.from_trace {
        let trace = Trace::load(p)?;
        let clearance = build_esdf(&scenario.raw_grid()?, 0.0);
        print_metrics(&compute_metrics(&trace, Some(&clearance)));
        return Ok(());
    }
    let policies = PolicySet::load_dir(&a.checkpoints, a.model)?;
    let base = g.config.env.clone().unwrap_or_else(EnvConfig::default);
    let mut opts = FlyOptions {
        seed: g.seed.unwrap_or(0),
        model: a.model,
        replan_every: a.replan_every,
        ..FlyOptions::default()
    };
    if let Some(s) = a.spacing {
        opts.cp_spacing = s;
    }
    let flight = fly(&scenario, &base, &policies, &opts)?;

    let out = g.out.clone().unwrap_or_else(|| PathBuf::from("flights").join(&scenario.name));
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let trace_path = out.join("trace.csv");
    flight.trace.save(&trace_path)?;
    let mut path_csv = String::from("x,y\n");
    for p in flight.path.iter().flat_map(|p| &p.waypoints) {
        path_csv.push_str(&format!("{},{}\n", p.x, p.y));
    }
    let path_file = out.join("path.csv");
    std::fs::write(&path_file, path_csv).map_err(|e| Error::io(&path_file, e))?;

    println!("scenario       {}", scenario.name);
    println!("outcome        {}", flight.outcome);
    print_metrics(&flight.metrics);
    println!(
        "model steps    free {} / obstacle {}",
        flight.model_steps[0], flight.model_steps[1]
    );
    println!("trace          {}", trace_path.display());
    Ok(())
}
