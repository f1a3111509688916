use std::path::PathBuf;

use clap::Args;
use resc::env::{EnvConfig, PolicyTag};
use resc::ppo::train_tag;
use resc::{Error, Result};

use crate::config::RunConfig;
use crate::Global;

#[derive(Args)]
pub struct TrainArgs {
    /// Scene family: free or obstacle.
    #[arg(long)]
    tag: PolicyTag,
    /// Overrides ppo.total_timesteps.
    #[arg(long)]
    timesteps: Option<u64>,
    /// Suppress per-update progress lines.
    #[arg(long)]
    quiet: bool,
}

pub fn run(g: &Global, a: TrainArgs) -> Result<()> {
    let env = g.config.env.clone().unwrap_or_else(|| EnvConfig::for_tag(a.tag));
    let mut ppo = g.config.ppo.clone().unwrap_or_default();
    if let Some(s) = g.seed {
        ppo.seed = s;
    }
    if let Some(t) = a.timesteps {
        ppo.total_timesteps = t;
    }
    ppo.validate()?;
    env.validate()?;
    let out = g.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(a.tag.as_str()));
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let echo = RunConfig {
        env: Some(env.clone()),
        ppo: Some(ppo.clone()),
    };
    let echo_path = out.join("config.toml");
    std::fs::write(&echo_path, echo.to_toml()).map_err(|e| Error::io(&echo_path, e))?;

    let total = ppo.updates();
    eprintln!(
        "training {} policy: {} updates of {} steps, hidden {:?}, seed {}",
        a.tag,
        total,
        ppo.steps_per_update(),
        ppo.hidden,
        ppo.seed
    );
    let quiet = a.quiet;
    let (_, report) = train_tag(a.tag, &env, &ppo, Some(&out), |m, e| {
        if !quiet {
            eprintln!(
                "update {:>4}/{total}  steps {:>8}  return {:>9.2}  success {:>5.2}  kl {:.4}  clip {:.3}  {:.1}s",
                m.update, m.timesteps, m.mean_return, m.success_rate, m.approx_kl, m.clip_frac, m.seconds
            );
        }
        if let Some(e) = e {
            eprintln!(
                "  eval: success {:.2}  return {:.2}  time {:.2}s",
                e.success_rate, e.mean_return, e.mean_time
            );
        }
    })?;
    if let Some(b) = report.best {
        println!(
            "best eval: success {:.2} at update {} ({} steps)",
            b.success_rate, b.update, b.timesteps
        );
    }
    println!("checkpoints and metrics written to {}", out.display());
    Ok(())
}
