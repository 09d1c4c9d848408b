use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::Context;
use bodygps::model::{self, Architecture, Network};
use bodygps::synth::PointSampling;
use bodygps::training::{self, ErrorStats, RunSeeds, TargetKind, TrainConfig, TrainReport, DEFAULT_EVAL_POINTS};
use bodygps::{DescriptorLayout, IntensityWindow, RegressorParams, Sampler};
use serde::{Deserialize, Serialize};

use crate::common::{self, config_error};
use crate::data;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Dataset manifest written by `synth-gen`.
    #[arg(long)]
    data: PathBuf,
    /// Training configuration (JSON); defaults for every missing field.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Root seed; overrides `train.seed` from the config file.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    #[default]
    AtlasCoord,
    Landmark(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub points: PointSampling,
    pub target: Target,
    pub window: IntensityWindow,
    pub precision: Precision,
    /// Held-out points per test subject.
    pub n_eval: usize,
    /// Start from these weights instead of a fresh initialization.
    pub init_model: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            points: PointSampling::default(),
            target: Target::default(),
            window: IntensityWindow::default(),
            precision: Precision::default(),
            n_eval: DEFAULT_EVAL_POINTS,
            init_model: None,
        }
    }
}

#[derive(Debug, Serialize)]
struct Resolved<'a> {
    command: &'static str,
    data: &'a PathBuf,
    config: &'a RunConfig,
    seeds: RunSeeds,
}

#[derive(Debug, Serialize)]
struct EvalReport {
    target: Target,
    train_subjects: Vec<String>,
    test_subjects: Vec<String>,
    /// Error of the trained model on the test split, mm.
    heldout: Option<ErrorStats>,
    /// Same points through the initial weights.
    untrained: Option<ErrorStats>,
    final_loss: Option<f64>,
    train_seconds: f64,
}

fn check_config(cfg: &RunConfig) -> anyhow::Result<()> {
    cfg.train.validate().map_err(|e| config_error(e.to_string()))?;
    if cfg.points.n_base == 0 {
        return Err(config_error("points.n_base must be positive"));
    }
    if cfg.n_eval == 0 {
        return Err(config_error("n_eval must be positive"));
    }
    Ok(())
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let mut cfg: RunConfig = match &args.config {
        Some(path) => common::read_json(path, "training config")?,
        None => RunConfig::default(),
    };
    check_config(&cfg)?;
    common::require_file(&args.data, "dataset manifest")?;
    if let Some(init) = &cfg.init_model {
        common::require_file(init, "initial model")?;
    }
    let seeds = RunSeeds::from_root(args.seed.unwrap_or(cfg.train.seed));
    cfg.train.seed = seeds.shuffle;

    let layout = DescriptorLayout::default_layout();
    let kind = match &cfg.target {
        Target::AtlasCoord => TargetKind::AtlasCoord,
        Target::Landmark(name) => TargetKind::Landmark(name.clone()),
    };
    let init: RegressorParams = match &cfg.init_model {
        Some(path) => common::load_model(path, &layout, kind.output_mode())?,
        None => Network::init(
            Architecture::for_layout(&layout),
            layout.fingerprint(),
            kind.output_mode(),
            seeds.init,
        ),
    };

    let dataset = data::load(&args.data)?;
    if dataset.train.is_empty() {
        return Err(config_error("the dataset has no training subjects"));
    }
    if let TargetKind::Landmark(name) = &kind {
        dataset
            .atlas
            .landmark(name)
            .map_err(|e| config_error(e.to_string()))?;
    }
    common::create_dir(&args.out)?;
    common::write_json(
        &args.out.join("config.json"),
        &Resolved {
            command: "train",
            data: &args.data,
            config: &cfg,
            seeds,
        },
    )?;

    let sampler = Sampler::new(layout, cfg.window);
    let t = Instant::now();
    let set = training::build_dataset(&dataset.train, &dataset.atlas, &sampler, &cfg.points, &kind, seeds.dataset)?;
    log::info!("{} training rows in {:.1?}", set.len(), t.elapsed());

    let t = Instant::now();
    let every = (cfg.train.epochs / 20).max(1);
    let log_epoch = |e: &training::EpochStats| {
        if e.epoch.is_multiple_of(every) || e.epoch + 1 == cfg.train.epochs {
            log::info!("epoch {:>5}  loss {:.5}", e.epoch, e.mean_loss);
        }
    };
    let (params, report): (RegressorParams, TrainReport) = match cfg.precision {
        Precision::F32 => {
            let mut net = init.clone();
            let report = training::train(&mut net, &set, &cfg.train, log_epoch)?;
            (net, report)
        }
        Precision::F64 => {
            let mut net = init.cast::<f64>();
            let report = training::train(&mut net, &set, &cfg.train, log_epoch)?;
            (net.cast::<f32>(), report)
        }
    };
    let train_seconds = t.elapsed().as_secs_f64();
    drop(set);

    model::save_params(&params, args.out.join("model.bgps"))?;
    let mut csv = String::from("epoch,mean_loss,learning_rate\n");
    for e in &report.epochs {
        writeln!(csv, "{},{},{}", e.epoch, e.mean_loss, e.learning_rate)?;
    }
    fs::write(args.out.join("loss_history.csv"), csv).context("writing loss_history.csv")?;

    let (heldout, untrained) = if dataset.test.is_empty() {
        log::warn!("no test subjects in the dataset; eval.json has no held-out error");
        (None, None)
    } else {
        let eval = |net: &RegressorParams| {
            training::evaluate_subjects(net, &dataset.test, &dataset.atlas, &sampler, &kind, cfg.n_eval, seeds.eval)
        };
        (Some(eval(&params)?), Some(eval(&init)?))
    };
    if let (Some(h), Some(u)) = (&heldout, &untrained) {
        log::info!("held-out median {:.2} mm (untrained {:.2} mm)", h.median, u.median);
    }
    common::write_json(
        &args.out.join("eval.json"),
        &EvalReport {
            target: cfg.target.clone(),
            train_subjects: dataset.train.iter().map(|s| s.id.clone()).collect(),
            test_subjects: dataset.test.iter().map(|s| s.id.clone()).collect(),
            heldout,
            untrained,
            final_loss: report.final_loss(),
            train_seconds,
        },
    )?;
    Ok(())
}
