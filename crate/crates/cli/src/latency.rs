use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use bodygps::synth::{self, PhantomSpec, PointSampling};
use bodygps::tasks::Engine;
use bodygps::training::percentile_sorted;
use bodygps::{DescriptorLayout, IntensityWindow, OutputMode, Sampler, Volume, WorldPoint};
use serde::Serialize;

use crate::common::{self, config_error};

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    atlas: PathBuf,
    /// Volume to query.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    volume: Option<PathBuf>,
    /// Render the torso phantom on an N^3 grid over its usual field of view
    /// instead of reading a volume.
    #[arg(long, value_name = "N")]
    synthetic: Option<usize>,
    #[arg(long, default_value_t = 10_000)]
    queries: usize,
    /// Voxels above this intensity count as body.
    #[arg(long, default_value_t = -900.0, allow_hyphen_values = true)]
    body_threshold: f32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_parser = common::parse_window, allow_hyphen_values = true, default_value = "-1024,3071")]
    window: IntensityWindow,
    /// Output JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Serialize)]
pub struct LatencyReport {
    pub dims: [usize; 3],
    pub queries: usize,
    pub seed: u64,
    pub p50_us: f64,
    pub p95_us: f64,
    pub p99_us: f64,
    pub mean_us: f64,
    pub max_us: f64,
}

const WARMUP: usize = 100;

/// Uniform in-body points; batches from successive sub-seeds are filtered
/// until `n` points are collected.
fn body_points(volume: &Volume, n: usize, threshold: f32, seed: u64) -> anyhow::Result<Vec<WorldPoint>> {
    let params = PointSampling {
        n_base: n.max(1000),
        n_perturb: 0,
        body_fraction: 1.0,
        body_threshold: threshold,
        ..PointSampling::default()
    };
    let mut out = Vec::with_capacity(n);
    for round in 0..100u64 {
        let batch = synth::sample_points(volume, &params, synth::stream_seed(seed, round));
        out.extend(batch.into_iter().filter(|&p| volume.sample_nearest(p) > threshold));
        if out.len() >= n {
            out.truncate(n);
            return Ok(out);
        }
    }
    Err(config_error(format!("the volume has too few voxels above {threshold} to draw {n} in-body points")))
}

fn synthetic_volume(n: usize, seed: u64) -> anyhow::Result<Volume> {
    let mut spec = PhantomSpec::torso();
    let fov = [0, 1, 2].map(|a| spec.dims[a] as f64 * spec.spacing[a]);
    spec.dims = [n; 3];
    spec.spacing = fov.map(|f| f / n as f64);
    spec.origin = None;
    let atlas = synth::make_atlas_phantom(&spec, seed).map_err(|e| config_error(e.to_string()))?;
    Ok(atlas.image().clone())
}

pub fn run(args: Args) -> anyhow::Result<()> {
    if args.queries == 0 {
        return Err(config_error("--queries must be positive"));
    }
    if args.synthetic == Some(0) {
        return Err(config_error("--synthetic must be positive"));
    }
    if let Some(v) = &args.volume {
        common::require_file(v, "volume")?;
    }
    let layout = DescriptorLayout::default_layout();
    let params = common::load_model(&args.model, &layout, OutputMode::AtlasCoord)?;
    let atlas = Arc::new(common::load_atlas(&args.atlas)?);
    let engine = Engine::new(params, Sampler::new(layout, args.window), atlas)?;
    let volume = match (&args.volume, args.synthetic) {
        (Some(path), _) => common::load_volume(path)?,
        (None, Some(n)) => synthetic_volume(n, synth::stream_seed(args.seed, 0))?,
        (None, None) => unreachable!("clap requires --volume or --synthetic"),
    };

    let points = body_points(&volume, args.queries, args.body_threshold, synth::stream_seed(args.seed, 1))?;
    let report = measure(&engine, &volume, &points, args.seed);
    log::info!(
        "{:?}: p50 {:.1} us, p95 {:.1} us, p99 {:.1} us",
        report.dims,
        report.p50_us,
        report.p95_us,
        report.p99_us
    );
    common::write_json(&args.out, &report)
}

/// Per-query wall time of descriptor extraction plus a single-point forward pass.
pub fn measure(engine: &Engine, volume: &Volume, points: &[WorldPoint], seed: u64) -> LatencyReport {
    let mut scratch = engine.scratch();
    for &p in points.iter().cycle().take(WARMUP) {
        std::hint::black_box(engine.predict_with(volume, p, &mut scratch));
    }
    let mut us: Vec<f64> = points
        .iter()
        .map(|&p| {
            let t = Instant::now();
            std::hint::black_box(engine.predict_with(volume, p, &mut scratch));
            t.elapsed().as_secs_f64() * 1e6
        })
        .collect();
    us.sort_by(f64::total_cmp);
    LatencyReport {
        dims: volume.geometry().dims,
        queries: points.len(),
        seed,
        p50_us: percentile_sorted(&us, 0.50),
        p95_us: percentile_sorted(&us, 0.95),
        p99_us: percentile_sorted(&us, 0.99),
        mean_us: us.iter().sum::<f64>() / us.len() as f64,
        max_us: us[us.len() - 1],
    }
}
