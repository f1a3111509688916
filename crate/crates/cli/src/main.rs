use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use resc::Error;

mod bench;
mod config;
mod fly;
mod plot;
mod search;
mod train;

#[derive(Parser)]
#[command(name = "resc", version, about = "Visibility search and learned rate control for quadrotors")]
struct Cli {
    /// Seed for every random choice the command makes [default: 0, or the
    /// seed stored in --config].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML file with optional [env] and [ppo] tables.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file or directory (meaning depends on the command).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Shortest visibility path and its control points.
    Search(search::SearchArgs),
    /// Train a policy for one scene family.
    Train(train::TrainArgs),
    /// Plan and fly a scenario with trained policies.
    Fly(fly::FlyArgs),
    /// Render a flight trace as SVG.
    Plot(plot::PlotArgs),
    /// Time searches on random maps.
    BenchSearch(bench::BenchArgs),
}

pub struct Global {
    pub seed: Option<u64>,
    pub config: config::RunConfig,
    pub out: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } | Error::MissingModel(_) => 4,
        Error::Unreachable | Error::Occupied { .. } | Error::OutOfBounds(_) => 3,
        Error::Env { source, .. } => exit_code(source),
        _ => 2,
    }
}

fn run(cli: Cli) -> resc::Result<()> {
    let config = match &cli.config {
        Some(p) => config::RunConfig::load(p)?,
        None => config::RunConfig::default(),
    };
    let g = Global {
        seed: cli.seed,
        config,
        out: cli.out,
    };
    match cli.command {
        Command::Search(a) => search::run(&g, a),
        Command::Train(a) => train::run(&g, a),
        Command::Fly(a) => fly::run(&g, a),
        Command::Plot(a) => plot::run(&g, a),
        Command::BenchSearch(a) => bench::run(&g, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
