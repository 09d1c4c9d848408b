//! Desk-scale end-to-end run on the torso phantom: trains the regressor on
//! ten deformed subjects and reports held-out coordinate error and Dice.
//!
//! ```text
//! cargo run --release -p bodygps --example desk_profile -- [epochs] [f32|f64] [seed]
//! ```

use std::sync::Arc;
use std::time::Instant;

use bodygps::model::{Architecture, Network};
use bodygps::synth::{self, DeformationParams, PhantomSpec, PointSampling};
use bodygps::tasks::{self, Engine, OracleEngine};
use bodygps::training::{self, RunSeeds, TargetKind, TrainConfig};
use bodygps::{DescriptorLayout, IntensityWindow, OutputMode, Sampler};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(200);
    let use_f64 = args.get(2).is_some_and(|a| a == "f64");
    let seed: u64 = args.get(3).and_then(|a| a.parse().ok()).unwrap_or(1);

    let t0 = Instant::now();
    let spec = PhantomSpec::torso();
    let set = synth::generate_set(&spec, &DeformationParams::default(), 14, spec.noise_sd, seed).unwrap();
    let atlas = Arc::new(set.atlas);
    let (train_set, test_set) = set.subjects.split_at(10);
    println!("generated in {:.1?}", t0.elapsed());

    for s in test_set {
        let truth = s.true_mask(&atlas);
        let oracle = OracleEngine::new(atlas.clone(), s.field.clone());
        let identity = OracleEngine::new(atlas.clone(), synth::DeformationField::identity());
        let d_or = tasks::dice_micro(&tasks::segment(&oracle, &s.volume, 3.0).unwrap(), &truth).unwrap();
        let d_id = tasks::dice_micro(&tasks::segment(&identity, &s.volume, 3.0).unwrap(), &truth).unwrap();
        println!("{} oracle dice {d_or:.4} identity dice {d_id:.4} L={:.3}", s.id, s.field.field_lipschitz());
    }

    if epochs == 0 {
        return;
    }
    let seeds = RunSeeds::from_root(seed);
    let sampler = Sampler::new(DescriptorLayout::default_layout(), IntensityWindow::default());
    let t1 = Instant::now();
    let data = training::build_dataset(train_set, &atlas, &sampler, &PointSampling::default(), &TargetKind::AtlasCoord, seeds.dataset)
        .unwrap();
    println!("dataset {} rows in {:.1?}", data.len(), t1.elapsed());

    let arch = Architecture::for_layout(sampler.layout());
    let hash = sampler.layout().fingerprint();
    let untrained = Network::<f32>::init(arch, hash, OutputMode::AtlasCoord, seeds.init);
    let cfg = TrainConfig {
        epochs,
        seed: seeds.shuffle,
        ..TrainConfig::default()
    };
    let t2 = Instant::now();
    let report_every = (epochs / 20).max(1);
    let log = |e: &training::EpochStats| {
        if e.epoch.is_multiple_of(report_every) {
            println!("epoch {} loss {:.4} ({:.0?})", e.epoch, e.mean_loss, t2.elapsed());
        }
    };
    let params = if use_f64 {
        let mut net = untrained.cast::<f64>();
        training::train(&mut net, &data, &cfg, log).unwrap();
        net.cast::<f32>()
    } else {
        let mut net = untrained.clone();
        training::train(&mut net, &data, &cfg, log).unwrap();
        net
    };
    println!("trained in {:.1?}", t2.elapsed());

    let eval = |net, subjects| {
        training::evaluate_subjects(net, subjects, &atlas, &sampler, &TargetKind::AtlasCoord, 2000, seeds.eval).unwrap()
    };
    println!("untrained {:?}", eval(&untrained, test_set));
    println!("trained   {:?}", eval(&params, test_set));
    println!("train-fit {:?}", eval(&params, &train_set[..2]));

    let engine = Engine::new(params, sampler, atlas.clone()).unwrap();
    for s in test_set {
        let truth = s.true_mask(&atlas);
        let t = Instant::now();
        let seg = tasks::segment(&engine, &s.volume, 3.0).unwrap();
        println!("{} model dice {:.4} ({:.1?})", s.id, tasks::dice_micro(&seg, &truth).unwrap(), t.elapsed());
    }
}
