use std::path::PathBuf;
use std::sync::Arc;

use bodygps::atlas::NormalizedCoord;
use bodygps::synth::DeformationField;
use bodygps::tasks::{self, Engine, NavigationOptions, NavigationResult, OracleEngine, PositionModel};
use bodygps::{DescriptorLayout, IntensityWindow, OutputMode, Sampler, WorldPoint};
use serde::Serialize;

use crate::common::{self, config_error};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Trained coordinate model.
    #[arg(long, required_unless_present = "identity_oracle", conflicts_with = "identity_oracle")]
    model: Option<PathBuf>,
    /// Use the exact identity mapping instead of a model (both volumes are
    /// taken to be in atlas space).
    #[arg(long)]
    identity_oracle: bool,
    #[arg(long)]
    atlas: PathBuf,
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    /// Source point `x,y,z` in mm; repeat for several points.
    #[arg(long = "point", value_parser = common::parse_point, allow_hyphen_values = true, required = true)]
    points: Vec<WorldPoint>,
    /// Known target-space answers, one per `--point`, for error reporting.
    #[arg(long = "expected", value_parser = common::parse_point, allow_hyphen_values = true)]
    expected: Vec<WorldPoint>,
    #[arg(long, default_value_t = NavigationOptions::default().max_iters)]
    max_iters: usize,
    #[arg(long, value_parser = common::parse_window, allow_hyphen_values = true, default_value = "-1024,3071")]
    window: IntensityWindow,
    /// Output JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Serialize)]
struct Match {
    source_point: WorldPoint,
    source_coord: NormalizedCoord,
    result: NavigationResult,
    expected: Option<WorldPoint>,
    error_mm: Option<f64>,
}

pub fn run(args: Args) -> anyhow::Result<()> {
    if !args.expected.is_empty() && args.expected.len() != args.points.len() {
        return Err(config_error(format!(
            "{} --expected values given for {} --point values",
            args.expected.len(),
            args.points.len()
        )));
    }
    if args.max_iters == 0 {
        return Err(config_error("--max-iters must be at least 1"));
    }
    common::require_file(&args.source, "source volume")?;
    common::require_file(&args.target, "target volume")?;
    let atlas = Arc::new(common::load_atlas(&args.atlas)?);
    let model: Box<dyn PositionModel> = match &args.model {
        Some(path) => {
            let layout = DescriptorLayout::default_layout();
            let params = common::load_model(path, &layout, OutputMode::AtlasCoord)?;
            Box::new(Engine::new(params, Sampler::new(layout, args.window), atlas)?)
        }
        None => Box::new(OracleEngine::new(atlas, DeformationField::identity())),
    };
    let source = common::load_volume(&args.source)?;
    let target = common::load_volume(&args.target)?;
    let opts = NavigationOptions {
        max_iters: args.max_iters,
        ..NavigationOptions::default()
    };

    let mut out = Vec::with_capacity(args.points.len());
    for (i, &p) in args.points.iter().enumerate() {
        let result = tasks::match_point(model.as_ref(), &source, p, &target, &opts)?;
        let expected = args.expected.get(i).copied();
        let error_mm = expected.map(|e| e.distance(result.final_point));
        log::info!(
            "{p} -> {} ({} iterations{})",
            result.final_point,
            result.iterations,
            if result.converged { ", converged" } else { "" }
        );
        out.push(Match {
            source_point: p,
            source_coord: model.predict(&source, p),
            result,
            expected,
            error_mm,
        });
    }
    common::write_json(&args.out, &out)
}
