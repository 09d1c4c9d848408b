use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use anyhow::Context;
use bodygps::metaimage;
use bodygps::tasks::{self, Engine, DEFAULT_GRID_MM};
use bodygps::{DescriptorLayout, IntensityWindow, OutputMode, Sampler};
use serde::Serialize;

use crate::common::{self, config_error};

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long)]
    model: PathBuf,
    /// Atlas bundle directory.
    #[arg(long)]
    atlas: PathBuf,
    #[arg(long)]
    volume: PathBuf,
    /// Query grid spacing, mm.
    #[arg(long, default_value_t = DEFAULT_GRID_MM)]
    grid: f64,
    /// Intensity window the model was trained with.
    #[arg(long, value_parser = common::parse_window, allow_hyphen_values = true, default_value = "-1024,3071")]
    window: IntensityWindow,
    /// Ground-truth label volume; adds Dice scores to the summary.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Output label volume (.mha); a `.json` summary is written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Serialize)]
struct Summary {
    model: PathBuf,
    volume: PathBuf,
    grid_mm: f64,
    window: IntensityWindow,
    dims: [usize; 3],
    seconds: f64,
    label_counts: BTreeMap<u8, usize>,
    dice: Option<f64>,
    dice_per_label: Option<BTreeMap<u8, f64>>,
}

pub fn run(args: Args) -> anyhow::Result<()> {
    if !(args.grid > 0.0 && args.grid.is_finite()) {
        return Err(config_error("--grid must be a positive number of millimetres"));
    }
    common::require_file(&args.volume, "volume")?;
    if let Some(t) = &args.truth {
        common::require_file(t, "truth label volume")?;
    }
    let layout = DescriptorLayout::default_layout();
    let params = common::load_model(&args.model, &layout, OutputMode::AtlasCoord)?;
    let atlas = Arc::new(common::load_atlas(&args.atlas)?);
    let engine = Engine::new(params, Sampler::new(layout, args.window), atlas)?;
    let volume = common::load_volume(&args.volume)?;

    let t = Instant::now();
    let labels = tasks::segment(&engine, &volume, args.grid)?;
    let seconds = t.elapsed().as_secs_f64();
    log::info!("segmented {:?} in {seconds:.1}s", volume.geometry().dims);
    metaimage::save_label_volume(&labels, &args.out).with_context(|| format!("writing {}", args.out.display()))?;

    let mut label_counts = BTreeMap::new();
    for &l in labels.voxels() {
        *label_counts.entry(l).or_insert(0) += 1;
    }
    let (dice, dice_per_label) = match &args.truth {
        Some(path) => {
            let truth = metaimage::load_label_volume(path).with_context(|| format!("loading {}", path.display()))?;
            (
                Some(tasks::dice_micro(&labels, &truth)?),
                Some(tasks::dice_per_label(&labels, &truth)?),
            )
        }
        None => (None, None),
    };
    common::write_json(
        &args.out.with_extension("json"),
        &Summary {
            model: args.model,
            volume: args.volume,
            grid_mm: args.grid,
            window: args.window,
            dims: volume.geometry().dims,
            seconds,
            label_counts,
            dice,
            dice_per_label,
        },
    )
}
