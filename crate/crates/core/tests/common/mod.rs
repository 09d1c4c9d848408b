//! Helpers shared by the integration tests and the acceptance harness.
#![allow(dead_code)]

use bodygps::model::{Architecture, HeadInit, Network};
use bodygps::{Geometry, OutputMode, Volume};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

/// Integer-valued random volume.
pub fn random_volume(seed: u64, dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Volume {
    let g = Geometry::new(dims, spacing, origin).unwrap();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let voxels = (0..g.len()).map(|_| rng.gen_range(-1024..=3071) as f32).collect();
    Volume::new(g, voxels).unwrap()
}

/// Outcome of comparing analytic and central-difference gradients.
#[derive(Debug, Clone, Copy)]
pub struct GradientCheck {
    pub probes: usize,
    pub max_rel_error: f64,
}

/// Relative errors below this magnitude are measured against it instead,
/// so parameters with (near) zero gradient do not divide by zero.
pub const GRADIENT_FLOOR: f64 = 1e-6;
pub const FD_STEP: f64 = 1e-4;

/// Compares `loss_and_gradient` of a 64-bit network against central
/// differences on `params_per_batch` random parameters for each of
/// `batches` random batches.
pub fn gradient_check(
    arch: Architecture,
    batches: usize,
    params_per_batch: usize,
    batch_size: usize,
    seed: u64,
) -> GradientCheck {
    let net = Network::<f64>::init_with(arch, 0, OutputMode::AtlasCoord, seed, HeadInit::HeUniform);
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed ^ 0x5eed);
    let eps = 1e-8;
    let mut max_rel: f64 = 0.0;
    let mut probes = 0;
    for _ in 0..batches {
        let x: Vec<f32> = (0..batch_size * arch.input_len).map(|_| rng.gen_range(0.0..1.0)).collect();
        let t: Vec<f64> = (0..batch_size * 3).map(|_| rng.gen_range(-0.3..0.3)).collect();
        let (_, grad) = net.loss_and_gradient(&x, &t, eps).unwrap();
        for _ in 0..params_per_batch {
            let i = rng.gen_range(0..net.param_count());
            let mut probe = net.clone();
            probe.params_mut()[i] += FD_STEP;
            let (up, _) = probe.loss_and_gradient(&x, &t, eps).unwrap();
            probe.params_mut()[i] -= 2.0 * FD_STEP;
            let (down, _) = probe.loss_and_gradient(&x, &t, eps).unwrap();
            let numeric = (up - down) / (2.0 * FD_STEP);
            let rel = (grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs()).max(GRADIENT_FLOOR);
            max_rel = max_rel.max(rel);
            probes += 1;
        }
    }
    GradientCheck {
        probes,
        max_rel_error: max_rel,
    }
}
