//! Acceptance suite: prints one `PASS`/`FAIL` line per criterion.
//!
//! ```text
//! cargo test -p bodygps --test acceptance [-- <name filter>...]
//! ```
//!
//! Trained models are cached in cargo's per-target tmp directory, keyed by
//! everything that determines them; `BODYGPS_ACCEPTANCE_FRESH=1` retrains.
//! The process exits nonzero on a failed criterion only when
//! `BODYGPS_ACCEPTANCE_STRICT=1` is set, so the report always completes.

mod common;

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use bodygps::model::{Architecture, Network};
use bodygps::sampler::fnv1a64;
use bodygps::synth::{self, DeformationParams, PhantomSpec, PointSampling, SubjectSample};
use bodygps::tasks::{self, Engine, LandmarkModel, NavigationOptions, OracleEngine, DEFAULT_AGENT_OFFSET_MM, DEFAULT_GRID_MM};
use bodygps::training::{self, percentile_sorted, RunSeeds, TargetKind, TrainConfig, TrainingSet};
use bodygps::{Atlas, DescriptorLayout, IntensityWindow, OutputMode, RegressorParams, Sampler, Volume, WorldPoint};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

// descriptor contract
const DESCRIPTOR_LEN: usize = 7290;
const EQUIVARIANCE_CASES: usize = 50;

// gradients
const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_PARAMS_PER_BATCH: usize = 100;
const GRAD_BATCHES: usize = 10;
const GRAD_BATCH_SIZE: usize = 4;
const GRAD_ARCH: Architecture = Architecture::new(48, 24, 3);

// latency
const LATENCY_QUERIES: usize = 10_000;
const LATENCY_MEDIAN_MAX_US: f64 = 1000.0;
const LATENCY_SIZE_RATIO_MAX: f64 = 1.5;
const LARGE_VOLUME_SIDE: usize = 512;
const BODY_THRESHOLD: f32 = -900.0;

// desk profile: coordinate regression and segmentation
const DESK_SEED: u64 = 1;
const DESK_TRAIN: usize = 10;
const DESK_TEST: usize = 4;
const DESK_EPOCHS: usize = 200;
const DESK_EVAL_POINTS: usize = 2000;
const E2E_MEDIAN_MAX_MM: f64 = 5.0;
const E2E_MAX_FRACTION_OF_UNTRAINED: f64 = 1.0 / 3.0;
const ORACLE_DICE_MIN: f64 = 0.95;
const MODEL_DICE_MIN: f64 = 0.80;
const MODEL_DICE_MARGIN: f64 = 0.10;

// navigation contraction
const NAV_STARTS: usize = 100;
const NAV_FINAL_MAX_MM: f64 = 0.1;
const NAV_RATIO_SLACK: f64 = 0.05;
/// Steps that start closer than this to the fixed point are excluded from
/// the decay ratio; they are dominated by rounding.
const NAV_RATIO_MIN_ERROR_MM: f64 = 1e-6;

// landmark navigation on the ankle phantom
const ANKLE_SEED: u64 = 2;
const ANKLE_TRAIN: usize = 24;
const ANKLE_TEST: usize = 20;
const ANKLE_EPOCHS: usize = 150;
const ANKLE_LANDMARK: &str = "fibula_tip";
const ANKLE_WINDOW: [f32; 2] = [0.0, 1000.0];
const ANKLE_BODY_THRESHOLD: f32 = 150.0;
/// Points per training subject (base and perturbed each); more subjects with
/// fewer points each covers more anatomical variation for the same cost.
const ANKLE_POINTS: usize = 1000;
const LANDMARK_SENS_5MM_MIN: f64 = 0.9;
const LANDMARK_SENS_10MM_MIN: f64 = 1.0;

// determinism
const REPRO_EPOCHS: usize = 3;
const REPRO_POINTS: usize = 150;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail }
    }
}

/// Trained models shared between criteria, built on first use.
#[derive(Default)]
struct Context {
    desk: Option<Desk>,
}

impl Context {
    fn desk(&mut self) -> &Desk {
        self.desk.get_or_insert_with(Desk::build)
    }
}

fn cache_dir() -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance-cache");
    fs::create_dir_all(&dir).expect("cache directory");
    dir
}

/// A trained network plus its per-epoch loss, reloaded from the cache when a
/// run with the same key exists.
struct Trained {
    params: RegressorParams,
    history: Vec<f64>,
    cached: bool,
    seconds: f64,
}

fn train_cached(name: &str, key: &str, init: &RegressorParams, cfg: &TrainConfig, data: impl FnOnce() -> TrainingSet) -> Trained {
    let hash = fnv1a64(key.as_bytes());
    let model_path = cache_dir().join(format!("{name}-{hash:016x}.bgps"));
    let loss_path = model_path.with_extension("loss");
    let fresh = std::env::var_os("BODYGPS_ACCEPTANCE_FRESH").is_some();
    if !fresh && model_path.is_file() && loss_path.is_file() {
        let params = bodygps::model::load_params(&model_path).expect("cached model");
        let history = fs::read_to_string(&loss_path)
            .expect("cached loss")
            .lines()
            .map(|l| f64::from_bits(u64::from_str_radix(l, 16).expect("hex loss")))
            .collect();
        return Trained {
            params,
            history,
            cached: true,
            seconds: 0.0,
        };
    }
    let t = Instant::now();
    let set = data();
    let mut net = init.clone();
    let every = (cfg.epochs / 10).max(1);
    let report = training::train(&mut net, &set, cfg, |e| {
        if (e.epoch + 1) % every == 0 {
            eprintln!("  {name}: epoch {}/{} loss {:.4} ({:.0}s)", e.epoch + 1, cfg.epochs, e.mean_loss, t.elapsed().as_secs_f64());
        }
    })
    .expect("training succeeds");
    let history: Vec<f64> = report.epochs.iter().map(|e| e.mean_loss).collect();
    bodygps::model::save_params(&net, &model_path).expect("write cached model");
    let mut text = String::new();
    for l in &history {
        writeln!(text, "{:016x}", l.to_bits()).unwrap();
    }
    fs::write(&loss_path, text).expect("write cached loss");
    Trained {
        params: net,
        history,
        cached: false,
        seconds: t.elapsed().as_secs_f64(),
    }
}

struct Desk {
    atlas: Arc<Atlas>,
    train: Vec<SubjectSample>,
    test: Vec<SubjectSample>,
    sampler: Sampler,
    seeds: RunSeeds,
    init: RegressorParams,
    trained: Trained,
}

impl Desk {
    fn build() -> Self {
        let spec = PhantomSpec::torso();
        let deformation = DeformationParams::default();
        let set = synth::generate_set(&spec, &deformation, DESK_TRAIN + DESK_TEST, spec.noise_sd, DESK_SEED)
            .expect("desk phantom set");
        let atlas = Arc::new(set.atlas);
        let mut train = set.subjects;
        let test = train.split_off(DESK_TRAIN);
        let layout = DescriptorLayout::default_layout();
        let sampler = Sampler::new(layout.clone(), IntensityWindow::default());
        let seeds = RunSeeds::from_root(DESK_SEED);
        let cfg = TrainConfig {
            epochs: DESK_EPOCHS,
            seed: seeds.shuffle,
            ..TrainConfig::default()
        };
        let points = PointSampling::default();
        let init = Network::init(Architecture::for_layout(&layout), layout.fingerprint(), OutputMode::AtlasCoord, seeds.init);
        let key = format!("desk|{DESK_SEED}|{DESK_TRAIN}|{spec:?}|{deformation:?}|{cfg:?}|{points:?}|{}", layout.fingerprint());
        let trained = train_cached("desk", &key, &init, &cfg, || {
            training::build_dataset(&train, &atlas, &sampler, &points, &TargetKind::AtlasCoord, seeds.dataset)
                .expect("desk dataset")
        });
        Self {
            atlas,
            train,
            test,
            sampler,
            seeds,
            init,
            trained,
        }
    }

    fn engine(&self) -> Engine {
        Engine::new(self.trained.params.clone(), self.sampler.clone(), self.atlas.clone()).expect("engine")
    }

    fn provenance(&self) -> &'static str {
        if self.trained.cached {
            "cached model"
        } else {
            "freshly trained"
        }
    }
}

fn descriptor_contract(_: &mut Context) -> Outcome {
    let layout = DescriptorLayout::default_layout();
    let sampler = Sampler::new(layout.clone(), IntensityWindow::default());
    let len_ok = layout.total_len() == DESCRIPTOR_LEN && sampler.len() == DESCRIPTOR_LEN;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(41);
    // eighths of a millimetre keep every sum exact
    let mut dyadic = |lo: i32, hi: i32| [0; 3].map(|_: i32| rng.gen_range(lo..hi) as f64 / 8.0);
    let mut equal = 0;
    let mut deterministic = 0;
    for case in 0..EQUIVARIANCE_CASES {
        let origin = dyadic(-800, 800);
        let p = WorldPoint::from(dyadic(-400, 1200));
        let t = dyadic(-4000, 4000);
        let v = common::random_volume(case as u64, [28, 24, 20], [2.0, 2.0, 3.0], origin);
        let moved = v.with_origin([origin[0] + t[0], origin[1] + t[1], origin[2] + t[2]]).unwrap();
        let a = sampler.extract(&v, p);
        equal += usize::from(a == sampler.extract(&moved, p.offset(t)));
        deterministic += usize::from(a == sampler.extract(&v, p));
    }
    Outcome::new(
        len_ok && equal == EQUIVARIANCE_CASES && deterministic == EQUIVARIANCE_CASES,
        format!(
            "length {} (required {DESCRIPTOR_LEN}); translated volumes equal in {equal}/{EQUIVARIANCE_CASES}; repeated extraction equal in {deterministic}/{EQUIVARIANCE_CASES}",
            layout.total_len()
        ),
    )
}

fn gradient_correctness(_: &mut Context) -> Outcome {
    let check = common::gradient_check(GRAD_ARCH, GRAD_BATCHES, GRAD_PARAMS_PER_BATCH, GRAD_BATCH_SIZE, 2024);
    Outcome::new(
        check.max_rel_error < GRAD_REL_TOL,
        format!(
            "{} probes on a {}-in/{}-wide/{}-block f64 network; max relative error {:.2e} (limit {GRAD_REL_TOL:.0e})",
            check.probes, GRAD_ARCH.input_len, GRAD_ARCH.width, GRAD_ARCH.blocks, check.max_rel_error
        ),
    )
}

fn body_points(volume: &Volume, n: usize, threshold: f32, seed: u64) -> Vec<WorldPoint> {
    let params = PointSampling {
        n_base: n,
        n_perturb: 0,
        body_fraction: 1.0,
        body_threshold: threshold,
        ..PointSampling::default()
    };
    let mut out = Vec::with_capacity(n);
    let mut round = 0;
    while out.len() < n {
        let batch = synth::sample_points(volume, &params, synth::stream_seed(seed, round));
        out.extend(batch.into_iter().filter(|&p| volume.sample_nearest(p) > threshold));
        round += 1;
    }
    out.truncate(n);
    out
}

fn median_latency_us(engine: &Engine, volume: &Volume, points: &[WorldPoint]) -> (f64, f64) {
    let mut scratch = engine.scratch();
    for &p in points.iter().take(200) {
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
    (percentile_sorted(&us, 0.5), percentile_sorted(&us, 0.99))
}

fn latency(ctx: &mut Context) -> Outcome {
    let desk = ctx.desk();
    let engine = desk.engine();
    let small = &desk.test[0].volume;
    let small_points = body_points(small, LATENCY_QUERIES, BODY_THRESHOLD, 5);
    let (p50_small, p99_small) = median_latency_us(&engine, small, &small_points);

    // same phantom and spacing, larger grid: only the volume size changes
    let mut spec = PhantomSpec::torso();
    spec.dims = [LARGE_VOLUME_SIDE; 3];
    let large = synth::make_atlas_phantom(&spec, 6).expect("large phantom").image().clone();
    let large_points = body_points(&large, LATENCY_QUERIES, BODY_THRESHOLD, 7);
    let (p50_large, p99_large) = median_latency_us(&engine, &large, &large_points);
    drop(large);

    let ratio = p50_large / p50_small;
    Outcome::new(
        p50_small <= LATENCY_MEDIAN_MAX_US && p50_large <= LATENCY_MEDIAN_MAX_US && ratio <= LATENCY_SIZE_RATIO_MAX,
        format!(
            "{LATENCY_QUERIES} in-body queries: 96^3 p50 {p50_small:.0} us (p99 {p99_small:.0}), {LARGE_VOLUME_SIDE}^3 p50 {p50_large:.0} us (p99 {p99_large:.0}); limit {LATENCY_MEDIAN_MAX_US:.0} us; size ratio {ratio:.2} (limit {LATENCY_SIZE_RATIO_MAX})"
        ),
    )
}

fn end_to_end(ctx: &mut Context) -> Outcome {
    let desk = ctx.desk();
    let eval = |net: &RegressorParams| {
        training::evaluate_subjects(net, &desk.test, &desk.atlas, &desk.sampler, &TargetKind::AtlasCoord, DESK_EVAL_POINTS, desk.seeds.eval)
            .expect("evaluation")
    };
    let trained = eval(&desk.trained.params);
    let untrained = eval(&desk.init);
    let fit = training::evaluate_subjects(
        &desk.trained.params,
        &desk.train[..2],
        &desk.atlas,
        &desk.sampler,
        &TargetKind::AtlasCoord,
        DESK_EVAL_POINTS,
        desk.seeds.eval,
    )
    .expect("evaluation");
    let limit = E2E_MEDIAN_MAX_MM.min(untrained.median * E2E_MAX_FRACTION_OF_UNTRAINED);
    Outcome::new(
        trained.median <= limit,
        format!(
            "held-out median {:.2} mm (p95 {:.2}), untrained {:.2} mm, limit {limit:.2} mm; training-subject median {:.2} mm; {DESK_EPOCHS} epochs, final loss {:.3}, {} ({:.0}s)",
            trained.median,
            trained.p95,
            untrained.median,
            fit.median,
            desk.trained.history.last().copied().unwrap_or(f64::NAN),
            desk.provenance(),
            desk.trained.seconds
        ),
    )
}

fn segmentation(ctx: &mut Context) -> Outcome {
    let desk = ctx.desk();
    let engine = desk.engine();
    let identity = OracleEngine::new(desk.atlas.clone(), synth::DeformationField::identity());
    let mut oracle_scores = Vec::new();
    let mut identity_scores = Vec::new();
    let mut model_scores = Vec::new();
    for s in &desk.test {
        let truth = s.true_mask(&desk.atlas);
        let oracle = OracleEngine::new(desk.atlas.clone(), s.field.clone());
        let dice = |m: &dyn tasks::PositionModel| {
            let seg = tasks::segment(m, &s.volume, DEFAULT_GRID_MM).expect("segmentation");
            tasks::dice_micro(&seg, &truth).expect("dice")
        };
        oracle_scores.push(dice(&oracle));
        identity_scores.push(dice(&identity));
        model_scores.push(dice(&engine));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let oracle_min = oracle_scores.iter().copied().fold(f64::INFINITY, f64::min);
    let (model, ident) = (mean(&model_scores), mean(&identity_scores));
    let fmt = |v: &[f64]| v.iter().map(|d| format!("{d:.3}")).collect::<Vec<_>>().join(" ");
    Outcome::new(
        oracle_min >= ORACLE_DICE_MIN && model >= MODEL_DICE_MIN && model - ident >= MODEL_DICE_MARGIN,
        format!(
            "micro Dice on {} held-out subjects at {DEFAULT_GRID_MM} mm: oracle [{}] (min {oracle_min:.3}, limit {ORACLE_DICE_MIN}); model [{}] mean {model:.3} (limit {MODEL_DICE_MIN}); identity mean {ident:.3}, margin {:.3} (limit {MODEL_DICE_MARGIN})",
            desk.test.len(),
            fmt(&oracle_scores),
            fmt(&model_scores),
            model - ident
        ),
    )
}

fn navigation_contraction(_: &mut Context) -> Outcome {
    let spec = PhantomSpec::torso();
    let geometry = spec.geometry().unwrap();
    let atlas = Arc::new(synth::make_atlas_phantom(&spec, 0).unwrap());
    let (lo, hi) = geometry.bounds();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(8);
    let point = |rng: &mut Xoshiro256PlusPlus| {
        WorldPoint::new(rng.gen_range(lo.x..=hi.x), rng.gen_range(lo.y..=hi.y), rng.gen_range(lo.z..=hi.z))
    };
    let opts = NavigationOptions::default();
    let fields = 4;
    let mut worst_final: f64 = 0.0;
    let mut worst_margin = f64::NEG_INFINITY;
    let mut worst_ratio: f64 = 0.0;
    let mut max_iters = 0;
    let mut converged = 0;
    let mut l_max: f64 = 0.0;
    for f in 0..fields {
        let field = synth::make_deformation(900 + f as u64, &DeformationParams::default(), &geometry).unwrap();
        let l = field.field_lipschitz();
        l_max = l_max.max(l);
        let oracle = OracleEngine::new(atlas.clone(), field.clone());
        for _ in 0..NAV_STARTS / fields {
            let goal = point(&mut rng);
            let start = point(&mut rng);
            let target = atlas.to_normalized(field.map(goal));
            let r = tasks::navigate(&oracle, atlas.image(), target, start, &opts).unwrap();
            worst_final = worst_final.max(r.final_point.distance(goal));
            max_iters = max_iters.max(r.iterations);
            converged += usize::from(r.converged);
            for w in r.path.windows(2) {
                let before = w[0].distance(goal);
                if before > NAV_RATIO_MIN_ERROR_MM {
                    let ratio = w[1].distance(goal) / before;
                    worst_ratio = worst_ratio.max(ratio);
                    worst_margin = worst_margin.max(ratio - (l + NAV_RATIO_SLACK));
                }
            }
        }
    }
    Outcome::new(
        worst_final < NAV_FINAL_MAX_MM && max_iters <= opts.max_iters && worst_margin <= 0.0,
        format!(
            "{NAV_STARTS} random starts over {fields} fields (L up to {l_max:.3}): worst final error {worst_final:.2e} mm (limit {NAV_FINAL_MAX_MM}), {converged}/{NAV_STARTS} converged, at most {max_iters} iterations; worst step ratio {worst_ratio:.3} (limit L + {NAV_RATIO_SLACK})"
        ),
    )
}

fn landmark_navigation(_: &mut Context) -> Outcome {
    let spec = PhantomSpec::ankle();
    let deformation = DeformationParams::default();
    let set = synth::generate_set(&spec, &deformation, ANKLE_TRAIN + ANKLE_TEST, spec.noise_sd, ANKLE_SEED)
        .expect("ankle phantom set");
    let atlas = set.atlas;
    let mut train = set.subjects;
    let test = train.split_off(ANKLE_TRAIN);
    let layout = DescriptorLayout::default_layout();
    let window = IntensityWindow::try_from(ANKLE_WINDOW).unwrap();
    let sampler = Sampler::new(layout.clone(), window);
    let seeds = RunSeeds::from_root(ANKLE_SEED);
    let cfg = TrainConfig {
        epochs: ANKLE_EPOCHS,
        seed: seeds.shuffle,
        ..TrainConfig::default()
    };
    let points = PointSampling {
        n_base: ANKLE_POINTS,
        n_perturb: ANKLE_POINTS,
        body_threshold: ANKLE_BODY_THRESHOLD,
        ..PointSampling::default()
    };
    let kind = TargetKind::Landmark(ANKLE_LANDMARK.to_string());
    let init = Network::init(Architecture::for_layout(&layout), layout.fingerprint(), OutputMode::DisplacementMm, seeds.init);
    let key = format!(
        "ankle|{ANKLE_SEED}|{ANKLE_TRAIN}|{spec:?}|{deformation:?}|{cfg:?}|{points:?}|{window:?}|{kind:?}|{}",
        layout.fingerprint()
    );
    let trained = train_cached("ankle", &key, &init, &cfg, || {
        training::build_dataset(&train, &atlas, &sampler, &points, &kind, seeds.dataset).expect("ankle dataset")
    });
    let model = LandmarkModel::new(trained.params, sampler).expect("displacement model");

    let opts = NavigationOptions::default();
    let mut single = Vec::new();
    let mut multi = Vec::new();
    for s in &test {
        let truth = s.landmark(&atlas, ANKLE_LANDMARK).unwrap();
        let g = s.volume.geometry();
        let one = tasks::navigate_landmark(&model, &s.volume, g.center(), &opts).unwrap();
        single.push(one.final_point.distance(truth));
        let starts = tasks::default_starts(g, DEFAULT_AGENT_OFFSET_MM);
        let many = tasks::multi_agent_landmark(&model, &s.volume, &starts, &opts).unwrap();
        multi.push(many.point.distance(truth));
    }
    let sens = |errors: &[f64]| {
        let s = tasks::sensitivity_at_thresholds(errors, &[5.0, 10.0]).unwrap();
        (s[0].sensitivity, s[1].sensitivity)
    };
    let (s5, s10) = sens(&single);
    let (m5, m10) = sens(&multi);
    let (med_single, med_multi) = (training::median(&single), training::median(&multi));
    let worst = single.iter().copied().fold(0.0, f64::max);
    Outcome::new(
        s5 >= LANDMARK_SENS_5MM_MIN && s10 >= LANDMARK_SENS_10MM_MIN && med_multi <= med_single,
        format!(
            "{ANKLE_LANDMARK} on {} held-out ankle subjects, center start: sensitivity {s5:.2} at 5 mm (limit {LANDMARK_SENS_5MM_MIN}), {s10:.2} at 10 mm (limit {LANDMARK_SENS_10MM_MIN}), median {med_single:.2} mm, worst {worst:.2} mm; 7 agents: {m5:.2} / {m10:.2}, median {med_multi:.2} mm; {} ({:.0}s)",
            test.len(),
            if trained.cached { "cached model" } else { "freshly trained" },
            trained.seconds
        ),
    )
}

fn determinism(ctx: &mut Context) -> Outcome {
    let desk = ctx.desk();
    let points = PointSampling {
        n_base: REPRO_POINTS,
        n_perturb: REPRO_POINTS,
        ..PointSampling::default()
    };
    let cfg = TrainConfig {
        epochs: REPRO_EPOCHS,
        seed: 17,
        ..TrainConfig::default()
    };
    let run = || {
        let set = training::build_dataset(&desk.train[..2], &desk.atlas, &desk.sampler, &points, &TargetKind::AtlasCoord, 3)
            .expect("dataset");
        let mut net = desk.init.clone();
        let report = training::train(&mut net, &set, &cfg, |_| {}).expect("training");
        let history: Vec<u64> = report.epochs.iter().map(|e| e.mean_loss.to_bits()).collect();
        (history, net.to_bytes())
    };
    let (h1, m1) = run();
    let (h2, m2) = run();
    let same_run = h1 == h2 && m1 == m2;
    let moved = m1 != desk.init.to_bytes();

    let bytes = desk.trained.params.to_bytes();
    let path = cache_dir().join("roundtrip.bgps");
    bodygps::model::save_params(&desk.trained.params, &path).unwrap();
    let reloaded = bodygps::model::load_params(&path).unwrap();
    let round_trip = reloaded == desk.trained.params && reloaded.to_bytes() == bytes && fs::read(&path).unwrap() == bytes;
    Outcome::new(
        same_run && moved && round_trip,
        format!(
            "two {REPRO_EPOCHS}-epoch runs with equal seeds: histories and model bytes identical = {same_run} (weights changed = {moved}); desk model save/load bit-exact = {round_trip} ({} bytes)",
            bytes.len()
        ),
    )
}

type Criterion = fn(&mut Context) -> Outcome;

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, Criterion); 8] = [
        ("descriptor-contract", descriptor_contract),
        ("gradient-correctness", gradient_correctness),
        ("latency", latency),
        ("end-to-end-regression", end_to_end),
        ("segmentation", segmentation),
        ("navigation-contraction", navigation_contraction),
        ("landmark-navigation", landmark_navigation),
        ("determinism-serialization", determinism),
    ];
    let mut ctx = Context::default();
    let mut failed = 0;
    let mut ran = 0;
    for (name, check) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let t = Instant::now();
        let outcome = check(&mut ctx);
        ran += 1;
        failed += usize::from(!outcome.pass);
        println!(
            "{} {name}: {} [{:.1}s]",
            if outcome.pass { "PASS" } else { "FAIL" },
            outcome.detail,
            t.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 && std::env::var_os("BODYGPS_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
