use std::fs;
use std::path::PathBuf;

use anyhow::Context;
use bodygps::tasks::{
    self, FrocCurve, LandmarkModel, MultiAgentResult, NavigationOptions, DEFAULT_AGENT_OFFSET_MM,
};
use bodygps::training::ErrorStats;
use bodygps::{DescriptorLayout, IntensityWindow, OutputMode, Sampler, Volume, WorldPoint};
use serde::Serialize;

use crate::common::{self, config_error};
use crate::data;

const FROC_THRESHOLDS_MM: [f64; 8] = [1.0, 2.0, 3.0, 5.0, 7.5, 10.0, 15.0, 20.0];

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Displacement model trained for one landmark.
    #[arg(long)]
    model: PathBuf,
    /// Single volume to search.
    #[arg(long, conflicts_with = "data", required_unless_present = "data")]
    volume: Option<PathBuf>,
    /// Evaluate on every test subject of a dataset manifest instead.
    #[arg(long, requires = "name")]
    data: Option<PathBuf>,
    /// Atlas landmark the model was trained for.
    #[arg(long)]
    name: Option<String>,
    /// Start point `x,y,z` in mm; repeatable. Defaults to the volume center.
    #[arg(long = "start", value_parser = common::parse_point, allow_hyphen_values = true)]
    starts: Vec<WorldPoint>,
    /// Seven starts around the center, combined by coordinate-wise median.
    #[arg(long, conflicts_with = "starts")]
    agents: bool,
    #[arg(long, default_value_t = NavigationOptions::default().max_iters)]
    max_iters: usize,
    #[arg(long, value_parser = common::parse_window, allow_hyphen_values = true, default_value = "-1024,3071")]
    window: IntensityWindow,
    /// Output JSON; dataset mode also writes per-case errors as CSV beside it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Serialize)]
struct Single<'a> {
    name: Option<&'a str>,
    point: WorldPoint,
    agents: &'a MultiAgentResult,
}

#[derive(Debug, Serialize)]
struct Case {
    id: String,
    truth: WorldPoint,
    found: WorldPoint,
    error_mm: f64,
}

#[derive(Debug, Serialize)]
struct Evaluation {
    name: String,
    cases: Vec<Case>,
    errors: ErrorStats,
    froc: FrocCurve,
}

fn starts_for(args: &Args, volume: &Volume) -> Vec<WorldPoint> {
    if args.agents {
        tasks::default_starts(volume.geometry(), DEFAULT_AGENT_OFFSET_MM)
    } else if args.starts.is_empty() {
        vec![volume.geometry().center()]
    } else {
        args.starts.clone()
    }
}

pub fn run(args: Args) -> anyhow::Result<()> {
    if args.max_iters == 0 {
        return Err(config_error("--max-iters must be at least 1"));
    }
    if let Some(v) = &args.volume {
        common::require_file(v, "volume")?;
    }
    if let Some(d) = &args.data {
        common::require_file(d, "dataset manifest")?;
    }
    let layout = DescriptorLayout::default_layout();
    let params = common::load_model(&args.model, &layout, OutputMode::DisplacementMm)?;
    let model = LandmarkModel::new(params, Sampler::new(layout, args.window))?;
    let opts = NavigationOptions {
        max_iters: args.max_iters,
        ..NavigationOptions::default()
    };

    if let Some(path) = &args.volume {
        let volume = common::load_volume(path)?;
        let result = tasks::multi_agent_landmark(&model, &volume, &starts_for(&args, &volume), &opts)?;
        log::info!("landmark at {}", result.point);
        return common::write_json(
            &args.out,
            &Single {
                name: args.name.as_deref(),
                point: result.point,
                agents: &result,
            },
        );
    }

    let name = args.name.clone().expect("clap requires --name with --data");
    let dataset = data::load(args.data.as_ref().expect("volume or data is present"))?;
    dataset.atlas.landmark(&name).map_err(|e| config_error(e.to_string()))?;
    let subjects = if dataset.test.is_empty() {
        log::warn!("dataset has no test split; evaluating on the training subjects");
        &dataset.train
    } else {
        &dataset.test
    };
    let mut cases = Vec::with_capacity(subjects.len());
    for s in subjects {
        let truth = s.landmark(&dataset.atlas, &name)?;
        let found = tasks::multi_agent_landmark(&model, &s.volume, &starts_for(&args, &s.volume), &opts)?.point;
        let error_mm = truth.distance(found);
        log::info!("{}: {error_mm:.2} mm", s.id);
        cases.push(Case {
            id: s.id.clone(),
            truth,
            found,
            error_mm,
        });
    }
    let errors: Vec<f64> = cases.iter().map(|c| c.error_mm).collect();
    let froc = tasks::froc_curve(&errors, &FROC_THRESHOLDS_MM)?;
    let csv_rows: Vec<(String, f64)> = cases.iter().map(|c| (c.id.clone(), c.error_mm)).collect();
    let csv_path = args.out.with_extension("csv");
    fs::write(&csv_path, tasks::errors_csv(&csv_rows)).with_context(|| format!("writing {}", csv_path.display()))?;
    common::write_json(
        &args.out,
        &Evaluation {
            name,
            cases,
            errors: ErrorStats::from_errors(errors),
            froc,
        },
    )
}
