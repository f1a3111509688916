use std::path::PathBuf;

use clap::Args;
use resc::plot::{render_svg, PlotInput};
use resc::scenario::Scenario;
use resc::trace::Trace;
use resc::{Error, Result, Vec2};

use crate::Global;

#[derive(Args)]
pub struct PlotArgs {
    /// Trace CSV written by `fly`.
    #[arg(long)]
    trace: PathBuf,
    /// Scenario whose map is drawn under the track.
    #[arg(long)]
    scenario: Option<String>,
    /// Path CSV (`x,y` rows) drawn dashed.
    #[arg(long)]
    path: Option<PathBuf>,
}

fn read_path(p: &PathBuf) -> Result<Vec<Vec2>> {
    let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
    let mut pts = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line == "x,y" {
            continue;
        }
        let pt = crate::search::parse_point(line).map_err(|msg| Error::TraceParse { line: i + 1, msg })?;
        pts.push(pt);
    }
    Ok(pts)
}

pub fn run(g: &Global, a: PlotArgs) -> Result<()> {
    let trace = Trace::load(&a.trace)?;
    let grid = match &a.scenario {
        Some(s) => Some(Scenario::resolve(s)?.raw_grid()?),
        None => None,
    };
    let path = a.path.as_ref().map(read_path).transpose()?;
    let svg = render_svg(&PlotInput {
        trace: &trace,
        map: grid.as_ref(),
        path: path.as_deref(),
        control_points: &[],
    });
    let out = g.out.clone().unwrap_or_else(|| a.trace.with_extension("svg"));
    std::fs::write(&out, svg).map_err(|e| Error::io(&out, e))?;
    println!("wrote {}", out.display());
    Ok(())
}
