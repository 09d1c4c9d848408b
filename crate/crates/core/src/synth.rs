//! Synthetic phantoms with analytically known subject-to-atlas mappings.
//!
//! A phantom atlas is a set of labeled ellipsoids inside an unlabeled body.
//! Subjects are produced by pulling the atlas image back through a smooth
//! backward field `psi(y) = y + d(y)`, a sum of Gaussian bumps, so the exact
//! atlas position of every subject point is available in closed form.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atlas::{Atlas, AtlasError, NormalizedCoord, DEFAULT_SCALE_MM};
use crate::volume::{norm, Geometry, LabelVolume, Volume, VolumeError, WorldPoint};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid phantom spec: {0}")]
    Spec(String),
    #[error("could not draw a deformation with field_lipschitz < {limit} in {attempts} attempts (amp_max {amp_max} mm, sigma {sigma_range:?} mm)")]
    Generation {
        limit: f64,
        attempts: usize,
        amp_max: f64,
        sigma_range: [f64; 2],
    },
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Atlas(#[from] AtlasError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrganSpec {
    pub label: u8,
    pub name: String,
    pub center: [f64; 3],
    pub semi_axes: [f64; 3],
    pub intensity: f32,
    /// Rotation about the z axis, degrees.
    #[serde(default)]
    pub rotation_z_deg: f64,
}

impl OrganSpec {
    fn contains(&self, p: WorldPoint) -> bool {
        ellipsoid_contains(self.center, self.semi_axes, self.rotation_z_deg, p)
    }
}

/// Unlabeled body outline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodySpec {
    pub center: [f64; 3],
    pub semi_axes: [f64; 3],
    pub intensity: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedPoint {
    pub name: String,
    pub world_mm: WorldPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    /// World position of voxel (0,0,0); centered on the world origin when absent.
    #[serde(default)]
    pub origin: Option<[f64; 3]>,
    pub background: f32,
    #[serde(default)]
    pub body: Option<BodySpec>,
    /// Later organs are drawn in front of earlier ones.
    pub organs: Vec<OrganSpec>,
    pub reference_point: NamedPoint,
    #[serde(default)]
    pub landmarks: BTreeMap<String, WorldPoint>,
    #[serde(default)]
    pub noise_sd: f32,
    #[serde(default = "default_scale")]
    pub scale_mm: f64,
}

fn default_scale() -> f64 {
    DEFAULT_SCALE_MM
}

fn ellipsoid_contains(center: [f64; 3], semi: [f64; 3], rot_deg: f64, p: WorldPoint) -> bool {
    let d = [p.x - center[0], p.y - center[1], p.z - center[2]];
    let (s, c) = rot_deg.to_radians().sin_cos();
    // rotate into the ellipsoid frame
    let local = [c * d[0] + s * d[1], -s * d[0] + c * d[1], d[2]];
    (0..3).map(|a| (local[a] / semi[a]).powi(2)).sum::<f64>() <= 1.0
}

impl PhantomSpec {
    pub fn geometry(&self) -> Result<Geometry, VolumeError> {
        match self.origin {
            Some(o) => Geometry::new(self.dims, self.spacing, o),
            None => Geometry::centered(self.dims, self.spacing),
        }
    }

    pub fn validate(&self) -> Result<Geometry, SynthError> {
        let g = self.geometry()?;
        let mut seen = BTreeMap::new();
        for o in &self.organs {
            if o.label == 0 {
                return Err(SynthError::Spec(format!("organ `{}` uses reserved label 0", o.name)));
            }
            if let Some(prev) = seen.insert(o.label, o.name.clone()) {
                return Err(SynthError::Spec(format!(
                    "label {} used by both `{prev}` and `{}`",
                    o.label, o.name
                )));
            }
            if o.semi_axes.iter().any(|&s| !(s > 0.0)) {
                return Err(SynthError::Spec(format!("organ `{}` has non-positive semi-axes", o.name)));
            }
        }
        if !g.contains(self.reference_point.world_mm) {
            return Err(SynthError::Spec(format!(
                "reference point `{}` at {} is outside the volume",
                self.reference_point.name, self.reference_point.world_mm
            )));
        }
        if !(self.noise_sd >= 0.0) {
            return Err(SynthError::Spec(format!("noise_sd {} must be >= 0", self.noise_sd)));
        }
        Ok(g)
    }

    /// Noise-free intensity and label at `p`.
    pub fn evaluate(&self, p: WorldPoint) -> (f32, u8) {
        if let Some(o) = self.organs.iter().rev().find(|o| o.contains(p)) {
            return (o.intensity, o.label);
        }
        match &self.body {
            Some(b) if ellipsoid_contains(b.center, b.semi_axes, 0.0, p) => (b.intensity, 0),
            _ => (self.background, 0),
        }
    }

    /// CT-like thoracoabdominal phantom: 96^3 voxels at 2 mm, reference point
    /// at the carina.
    pub fn torso() -> Self {
        let organ = |label, name: &str, center, semi_axes, intensity, rotation_z_deg| OrganSpec {
            label,
            name: name.to_string(),
            center,
            semi_axes,
            intensity,
            rotation_z_deg,
        };
        let organs = vec![
            organ(1, "lung_left", [46.0, 4.0, 42.0], [36.0, 46.0, 60.0], -820.0, 8.0),
            organ(2, "lung_right", [-48.0, 6.0, 44.0], [38.0, 48.0, 62.0], -840.0, -6.0),
            organ(3, "heart", [12.0, -22.0, 20.0], [36.0, 30.0, 32.0], 45.0, 30.0),
            organ(4, "liver", [-40.0, -4.0, -46.0], [52.0, 46.0, 38.0], 65.0, 15.0),
            organ(5, "spleen", [58.0, 26.0, -40.0], [22.0, 20.0, 32.0], 52.0, -20.0),
            organ(6, "stomach", [30.0, -26.0, -42.0], [32.0, 24.0, 26.0], 15.0, 10.0),
            organ(7, "kidney_left", [46.0, 40.0, -76.0], [20.0, 18.0, 30.0], 35.0, 20.0),
            organ(8, "kidney_right", [-46.0, 40.0, -80.0], [20.0, 18.0, 30.0], 30.0, -20.0),
            organ(9, "aorta", [-4.0, 28.0, -10.0], [14.0, 14.0, 95.0], 180.0, 0.0),
            organ(10, "spine", [0.0, 54.0, 0.0], [16.0, 15.0, 120.0], 450.0, 0.0),
            organ(11, "airway", [0.0, 0.0, 78.0], [13.0, 13.0, 32.0], -990.0, 0.0),
        ];
        let mut landmarks = BTreeMap::new();
        landmarks.insert("L1".to_string(), WorldPoint::new(0.0, 54.0, -60.0));
        landmarks.insert("liver_dome".to_string(), WorldPoint::new(-40.0, -4.0, -10.0));
        landmarks.insert("heart_apex".to_string(), WorldPoint::new(36.0, -36.0, 14.0));
        Self {
            dims: [96, 96, 96],
            spacing: [2.0; 3],
            origin: None,
            background: -1024.0,
            body: Some(BodySpec {
                center: [0.0, 0.0, 0.0],
                semi_axes: [86.0, 68.0, 160.0],
                intensity: -70.0,
            }),
            organs,
            reference_point: NamedPoint {
                name: "carina".to_string(),
                world_mm: WorldPoint::new(0.0, 0.0, 50.0),
            },
            landmarks,
            noise_sd: 15.0,
            scale_mm: DEFAULT_SCALE_MM,
        }
    }

    /// MR-like ankle phantom, 64^3 voxels at 2 mm, with a `fibula_tip`
    /// landmark at the lateral malleolus.
    pub fn ankle() -> Self {
        let organ = |label, name: &str, center, semi_axes, intensity, rotation_z_deg| OrganSpec {
            label,
            name: name.to_string(),
            center,
            semi_axes,
            intensity,
            rotation_z_deg,
        };
        let organs = vec![
            organ(1, "muscle_posterior", [0.0, 18.0, 30.0], [26.0, 14.0, 40.0], 180.0, 0.0),
            organ(2, "tibia", [-6.0, -4.0, 26.0], [13.0, 12.0, 48.0], 620.0, 10.0),
            organ(3, "fibula", [22.0, 6.0, 24.0], [5.0, 5.0, 40.0], 700.0, 0.0),
            organ(4, "talus", [-2.0, 0.0, -22.0], [18.0, 16.0, 11.0], 560.0, -10.0),
            organ(5, "calcaneus", [0.0, 22.0, -42.0], [14.0, 24.0, 12.0], 520.0, 5.0),
            organ(6, "achilles", [0.0, 38.0, 0.0], [6.0, 4.0, 36.0], 60.0, 0.0),
            organ(7, "navicular", [-10.0, -22.0, -30.0], [10.0, 7.0, 8.0], 480.0, 20.0),
            // distal fibula; the tip landmark sits just above its lower pole
            organ(8, "lateral_malleolus", [22.0, 6.0, -14.0], [7.0, 7.0, 8.0], 760.0, 0.0),
        ];
        let mut landmarks = BTreeMap::new();
        landmarks.insert("fibula_tip".to_string(), WorldPoint::new(22.0, 6.0, -20.0));
        landmarks.insert("medial_malleolus".to_string(), WorldPoint::new(-18.0, -4.0, -20.0));
        Self {
            dims: [64, 64, 64],
            spacing: [2.0; 3],
            origin: None,
            background: 0.0,
            body: Some(BodySpec {
                center: [0.0, 4.0, 0.0],
                semi_axes: [40.0, 44.0, 200.0],
                intensity: 300.0,
            }),
            organs,
            reference_point: NamedPoint {
                name: "ankle_center".to_string(),
                world_mm: WorldPoint::new(0.0, 0.0, -20.0),
            },
            landmarks,
            noise_sd: 12.0,
            scale_mm: DEFAULT_SCALE_MM,
        }
    }
}

/// Independent seed for sub-stream `stream` of a run seeded with `seed`
/// (splitmix64 finalizer over the pair).
pub fn stream_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn noise_source(seed: u64, sd: f32) -> (Xoshiro256PlusPlus, Option<Normal<f32>>) {
    let rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let normal = (sd > 0.0).then(|| Normal::new(0.0, sd).expect("finite positive sd"));
    (rng, normal)
}

/// Renders the phantom: intensities rounded to integers after seeded noise.
pub fn make_atlas_phantom(spec: &PhantomSpec, seed: u64) -> Result<Atlas, SynthError> {
    let g = spec.validate()?;
    let (mut rng, normal) = noise_source(seed, spec.noise_sd);
    let mut labels = Vec::with_capacity(g.len());
    let image = Volume::from_fn(g, spec.background, |p| {
        let (intensity, label) = spec.evaluate(p);
        labels.push(label);
        let noise = normal.map_or(0.0, |n| n.sample(&mut rng));
        (intensity + noise).round()
    })?;
    let mask = LabelVolume::new(g, labels)?;
    let names = spec
        .organs
        .iter()
        .map(|o| (o.label, o.name.clone()))
        .collect();
    Ok(Atlas::new(
        image,
        mask,
        spec.reference_point.name.clone(),
        spec.reference_point.world_mm,
        spec.scale_mm,
        spec.landmarks.clone(),
        names,
    )?)
}

/// One Gaussian displacement bump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: [f64; 3],
    pub amplitude: [f64; 3],
    pub sigma: f64,
}

/// Backward displacement `d(y) = sum_i a_i exp(-|y - c_i|^2 / (2 sigma_i^2))`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DeformationField {
    pub bumps: Vec<Bump>,
}

/// `max_r (r / sigma^2) exp(-r^2 / (2 sigma^2))`, attained at `r = sigma`.
fn gaussian_slope(sigma: f64) -> f64 {
    (-0.5f64).exp() / sigma
}

impl DeformationField {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn displacement(&self, y: WorldPoint) -> [f64; 3] {
        let mut d = [0.0; 3];
        for b in &self.bumps {
            let r2 = (y.x - b.center[0]).powi(2) + (y.y - b.center[1]).powi(2) + (y.z - b.center[2]).powi(2);
            let w = (-r2 / (2.0 * b.sigma * b.sigma)).exp();
            for a in 0..3 {
                d[a] += b.amplitude[a] * w;
            }
        }
        d
    }

    /// Subject world -> atlas world.
    pub fn map(&self, y: WorldPoint) -> WorldPoint {
        y.offset(self.displacement(y))
    }

    /// Jacobian of `d` (row = displacement component, column = derivative axis).
    pub fn jacobian(&self, y: WorldPoint) -> [[f64; 3]; 3] {
        let mut j = [[0.0; 3]; 3];
        let yv = y.to_array();
        for b in &self.bumps {
            let diff = [0, 1, 2].map(|a| yv[a] - b.center[a]);
            let s2 = b.sigma * b.sigma;
            let w = (-(diff[0] * diff[0] + diff[1] * diff[1] + diff[2] * diff[2]) / (2.0 * s2)).exp();
            for r in 0..3 {
                for c in 0..3 {
                    j[r][c] -= b.amplitude[r] * w * diff[c] / s2;
                }
            }
        }
        j
    }

    /// Upper bound on the Lipschitz constant of `d`:
    /// `sum_i |a_i| exp(-1/2) / sigma_i`.
    pub fn field_lipschitz(&self) -> f64 {
        self.bumps
            .iter()
            .map(|b| norm(b.amplitude) * gaussian_slope(b.sigma))
            .sum()
    }

    /// Solves `psi(y) = x` by fixed-point iteration `y <- x - d(y)`; converges
    /// whenever `field_lipschitz < 1`.
    pub fn inverse_map(&self, x: WorldPoint) -> WorldPoint {
        let mut y = x;
        for _ in 0..200 {
            let next = x.offset(self.displacement(y).map(|v| -v));
            let step = next.distance(y);
            y = next;
            if step < 1e-12 {
                break;
            }
        }
        y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeformationParams {
    pub n_bumps: usize,
    /// Largest bump amplitude, mm.
    pub amp_max: f64,
    pub sigma_range: [f64; 2],
    #[serde(default = "default_lipschitz_limit")]
    pub lipschitz_limit: f64,
}

fn default_lipschitz_limit() -> f64 {
    0.5
}

impl Default for DeformationParams {
    fn default() -> Self {
        Self {
            n_bumps: 4,
            amp_max: 15.0,
            sigma_range: [60.0, 100.0],
            lipschitz_limit: 0.5,
        }
    }
}

const GENERATION_ATTEMPTS: usize = 100;

/// Draws bumps centered inside `bounds`, amplitudes in `[amp_max/2, amp_max]`
/// with uniform random direction, until `field_lipschitz < lipschitz_limit`.
pub fn make_deformation(
    seed: u64,
    params: &DeformationParams,
    bounds: &Geometry,
) -> Result<DeformationField, SynthError> {
    let [s_lo, s_hi] = params.sigma_range;
    if !(params.amp_max > 0.0 && s_lo > 0.0 && s_hi >= s_lo) {
        return Err(SynthError::Spec(format!(
            "deformation needs amp_max > 0 and 0 < sigma_lo <= sigma_hi, got {params:?}"
        )));
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let (lo, hi) = bounds.bounds();
    let (lo, hi) = (lo.to_array(), hi.to_array());
    for _ in 0..GENERATION_ATTEMPTS {
        let bumps: Vec<Bump> = (0..params.n_bumps)
            .map(|_| {
                let center = [0, 1, 2].map(|a| rng.gen_range(lo[a]..=hi[a]));
                let dir = random_unit(&mut rng);
                let magnitude = rng.gen_range(params.amp_max / 2.0..=params.amp_max);
                let sigma = rng.gen_range(s_lo..=s_hi);
                Bump {
                    center,
                    amplitude: dir.map(|x| x * magnitude),
                    sigma,
                }
            })
            .collect();
        let field = DeformationField { bumps };
        if field.field_lipschitz() < params.lipschitz_limit {
            return Ok(field);
        }
    }
    Err(SynthError::Generation {
        limit: params.lipschitz_limit,
        attempts: GENERATION_ATTEMPTS,
        amp_max: params.amp_max,
        sigma_range: params.sigma_range,
    })
}

fn random_unit(rng: &mut impl Rng) -> [f64; 3] {
    loop {
        let v = [0, 1, 2].map(|_| rng.gen_range(-1.0..=1.0));
        let n = norm(v);
        if n > 1e-3 && n <= 1.0 {
            return v.map(|x| x / n);
        }
    }
}

/// A deformed copy of the atlas with its exact mapping.
#[derive(Debug, Clone)]
pub struct SubjectSample {
    pub id: String,
    pub volume: Volume,
    pub field: DeformationField,
}

impl SubjectSample {
    /// Exact normalized atlas coordinate of subject point `p`.
    pub fn ground_truth(&self, atlas: &Atlas, p: WorldPoint) -> NormalizedCoord {
        atlas.to_normalized(self.field.map(p))
    }

    /// Subject-space position of an atlas landmark.
    pub fn landmark(&self, atlas: &Atlas, name: &str) -> Result<WorldPoint, AtlasError> {
        Ok(self.field.inverse_map(atlas.landmark(name)?))
    }

    /// Atlas mask pulled back onto the subject grid.
    pub fn true_mask(&self, atlas: &Atlas) -> LabelVolume {
        LabelVolume::from_fn(*self.volume.geometry(), |y| {
            atlas.mask().label_nearest(self.field.map(y))
        })
        .expect("subject geometry is valid")
    }
}

/// Subject on the atlas grid.
pub fn warp_subject(
    atlas: &Atlas,
    field: &DeformationField,
    seed: u64,
    noise_sd: f32,
    id: impl Into<String>,
) -> SubjectSample {
    warp_subject_onto(atlas, field, *atlas.image().geometry(), seed, noise_sd, id)
}

/// Subject rendered on an arbitrary grid: atlas intensity (trilinear) at
/// `psi(y)` plus seeded noise, rounded to integers.
pub fn warp_subject_onto(
    atlas: &Atlas,
    field: &DeformationField,
    geometry: Geometry,
    seed: u64,
    noise_sd: f32,
    id: impl Into<String>,
) -> SubjectSample {
    let (mut rng, normal) = noise_source(seed, noise_sd);
    let image = atlas.image();
    let volume = Volume::from_fn(geometry, image.background(), |y| {
        let v = image.sample_trilinear(field.map(y));
        let noise = normal.map_or(0.0, |n| n.sample(&mut rng));
        (v + noise).round()
    })
    .expect("geometry validated by caller");
    SubjectSample {
        id: id.into(),
        volume,
        field: field.clone(),
    }
}

/// An atlas and its deformed subjects, generated from one root seed.
#[derive(Debug, Clone)]
pub struct SyntheticSet {
    pub atlas: Atlas,
    pub subjects: Vec<SubjectSample>,
    /// Noise seed of each subject.
    pub noise_seeds: Vec<u64>,
}

pub fn subject_id(index: usize) -> String {
    format!("subject_{index:03}")
}

/// Renders the atlas and `n_subjects` subjects. Stream 0 of `seed` drives
/// the atlas noise, stream 1 the deformations and stream 2 the subject
/// noise; subject `i` uses sub-stream `i` of the latter two.
pub fn generate_set(
    spec: &PhantomSpec,
    deformation: &DeformationParams,
    n_subjects: usize,
    noise_sd: f32,
    seed: u64,
) -> Result<SyntheticSet, SynthError> {
    let geometry = spec.validate()?;
    let atlas = make_atlas_phantom(spec, stream_seed(seed, 0))?;
    let field_root = stream_seed(seed, 1);
    let noise_root = stream_seed(seed, 2);
    let mut subjects = Vec::with_capacity(n_subjects);
    let mut noise_seeds = Vec::with_capacity(n_subjects);
    for i in 0..n_subjects {
        let field = make_deformation(stream_seed(field_root, i as u64), deformation, &geometry)?;
        let noise_seed = stream_seed(noise_root, i as u64);
        subjects.push(warp_subject(&atlas, &field, noise_seed, noise_sd, subject_id(i)));
        noise_seeds.push(noise_seed);
    }
    Ok(SyntheticSet {
        atlas,
        subjects,
        noise_seeds,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PointSampling {
    pub n_base: usize,
    pub n_perturb: usize,
    pub perturb_mm: f64,
    /// Share of base points drawn inside the body.
    pub body_fraction: f64,
    /// Intensities above this count as body.
    pub body_threshold: f32,
}

impl Default for PointSampling {
    fn default() -> Self {
        Self {
            n_base: 1500,
            n_perturb: 1500,
            perturb_mm: 5.0,
            body_fraction: 0.8,
            body_threshold: -900.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingPoint {
    pub point: WorldPoint,
    pub target: NormalizedCoord,
}

const BODY_TRIES: usize = 1000;

/// Random subject points paired with their exact atlas coordinates.
///
/// `n_base` points are uniform over the subject's voxel-center box, a
/// `body_fraction` share of them resampled until they land inside the body;
/// then `n_perturb` points jitter the base points (cycling through them) by
/// up to `perturb_mm` per axis.
pub fn sample_training_points(
    subject: &SubjectSample,
    atlas: &Atlas,
    params: &PointSampling,
    seed: u64,
) -> Vec<TrainingPoint> {
    sample_points(&subject.volume, params, seed)
        .into_iter()
        .map(|point| TrainingPoint {
            point,
            target: subject.ground_truth(atlas, point),
        })
        .collect()
}

/// The point-drawing part of [`sample_training_points`].
pub fn sample_points(volume: &Volume, params: &PointSampling, seed: u64) -> Vec<WorldPoint> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let (lo, hi) = volume.geometry().bounds();
    let (lo, hi) = (lo.to_array(), hi.to_array());
    let uniform = |rng: &mut Xoshiro256PlusPlus| {
        WorldPoint::from([0, 1, 2].map(|a| rng.gen_range(lo[a]..=hi[a])))
    };
    let mut out = Vec::with_capacity(params.n_base + params.n_perturb);
    for _ in 0..params.n_base {
        let want_body = rng.gen_bool(params.body_fraction.clamp(0.0, 1.0));
        let mut p = uniform(&mut rng);
        if want_body {
            for _ in 0..BODY_TRIES {
                if volume.sample_nearest(p) > params.body_threshold {
                    break;
                }
                p = uniform(&mut rng);
            }
        }
        out.push(p);
    }
    if params.n_base > 0 {
        let r = params.perturb_mm;
        for i in 0..params.n_perturb {
            let base = out[i % params.n_base];
            let jitter = [0, 1, 2].map(|_| if r > 0.0 { rng.gen_range(-r..=r) } else { 0.0 });
            out.push(base.offset(jitter));
        }
    }
    out
}

/// Split tag for dataset manifests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Everything needed to regenerate a subject's ground truth exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub id: String,
    pub path: String,
    pub split: Split,
    pub seed: u64,
    pub noise_sd: f32,
    pub field: DeformationField,
}

/// Synthetic dataset manifest (`manifest.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    /// Atlas bundle directory, relative to the manifest.
    pub atlas: String,
    pub seed: u64,
    pub phantom: PhantomSpec,
    pub deformation: DeformationParams,
    pub subjects: Vec<SubjectRecord>,
}
