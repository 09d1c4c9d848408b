use std::path::PathBuf;

use anyhow::Context;
use bodygps::metaimage::{self, ElementType};
use bodygps::synth::{self, DatasetManifest, DeformationParams, PhantomSpec, Split, SubjectRecord};
use clap::ValueEnum;
use serde::Serialize;

use crate::common::{self, config_error};

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Torso,
    Ankle,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Phantom specification (JSON).
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    spec: Option<PathBuf>,
    /// Built-in phantom instead of `--spec`.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Deformation parameters (JSON); library defaults otherwise.
    #[arg(long)]
    deformation: Option<PathBuf>,
    /// Number of deformed subjects.
    #[arg(long, default_value_t = 10)]
    subjects: usize,
    /// How many of the subjects (the last ones) form the test split.
    #[arg(long, default_value_t = 0)]
    test: usize,
    /// Subject noise standard deviation; the phantom's own otherwise.
    #[arg(long)]
    noise_sd: Option<f32>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Serialize)]
struct RunConfig<'a> {
    command: &'static str,
    phantom: &'a PhantomSpec,
    deformation: &'a DeformationParams,
    subjects: usize,
    test: usize,
    noise_sd: f32,
    seed: u64,
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let spec = match (&args.spec, args.preset) {
        (Some(path), _) => common::read_json::<PhantomSpec>(path, "phantom spec")?,
        (None, Some(Preset::Torso)) => PhantomSpec::torso(),
        (None, Some(Preset::Ankle)) => PhantomSpec::ankle(),
        (None, None) => return Err(config_error("either --spec or --preset is required")),
    };
    spec.validate().map_err(|e| config_error(e.to_string()))?;
    let deformation = match &args.deformation {
        Some(path) => common::read_json::<DeformationParams>(path, "deformation parameters")?,
        None => DeformationParams::default(),
    };
    if args.test > args.subjects {
        return Err(config_error(format!(
            "--test {} exceeds --subjects {}",
            args.test, args.subjects
        )));
    }
    let noise_sd = args.noise_sd.unwrap_or(spec.noise_sd);
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(config_error("--noise-sd must be a non-negative number"));
    }

    let set = synth::generate_set(&spec, &deformation, args.subjects, noise_sd, args.seed)
        .map_err(|e| config_error(e.to_string()))?;

    let atlas_dir = args.out.join("atlas");
    common::create_dir(&atlas_dir)?;
    common::create_dir(&args.out.join("subjects"))?;
    set.atlas.save(&atlas_dir).context("writing atlas bundle")?;
    let mut records = Vec::with_capacity(args.subjects);
    for (i, (subject, &noise_seed)) in set.subjects.iter().zip(&set.noise_seeds).enumerate() {
        let rel = format!("subjects/{}.mha", subject.id);
        metaimage::save_volume(&subject.volume, args.out.join(&rel), ElementType::Short)
            .with_context(|| format!("writing {rel}"))?;
        records.push(SubjectRecord {
            id: subject.id.clone(),
            path: rel,
            split: if i + args.test >= args.subjects { Split::Test } else { Split::Train },
            seed: noise_seed,
            noise_sd,
            field: subject.field.clone(),
        });
    }
    log::info!("atlas and {} subjects written to {}", args.subjects, args.out.display());

    let manifest = DatasetManifest {
        atlas: "atlas".into(),
        seed: args.seed,
        phantom: spec.clone(),
        deformation,
        subjects: records,
    };
    common::write_json(&args.out.join("manifest.json"), &manifest)?;
    common::write_json(
        &args.out.join("config.json"),
        &RunConfig {
            command: "synth-gen",
            phantom: &spec,
            deformation: &deformation,
            subjects: args.subjects,
            test: args.test,
            noise_sd,
            seed: args.seed,
        },
    )?;
    Ok(())
}
