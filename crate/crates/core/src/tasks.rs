//! Downstream procedures built on the coordinate regressor: point queries,
//! label-transfer segmentation, navigation-based matching and iterative
//! landmark detection, plus their metrics.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atlas::{Atlas, NormalizedCoord};
use crate::model::{ModelError, OutputMode, RegressorParams, Scratch};
use crate::sampler::Sampler;
use crate::synth::DeformationField;
use crate::volume::{norm, Geometry, LabelVolume, Volume, VolumeError, WorldPoint};

#[derive(Debug, Error)]
pub enum TaskError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error("invalid argument: {0}")]
    Invalid(String),
}

/// Anything that maps subject points to normalized atlas coordinates.
pub trait PositionModel: Send + Sync {
    fn atlas(&self) -> &Atlas;

    fn predict(&self, volume: &Volume, p: WorldPoint) -> NormalizedCoord;

    fn predict_batch(&self, volume: &Volume, points: &[WorldPoint]) -> Vec<NormalizedCoord> {
        points.iter().map(|&p| self.predict(volume, p)).collect()
    }
}

/// Anything that predicts the millimetre displacement from a point to a landmark.
pub trait DisplacementModel: Send + Sync {
    fn displacement(&self, volume: &Volume, p: WorldPoint) -> [f64; 3];
}

/// Trained regressor bound to its sampler and atlas.
#[derive(Debug, Clone)]
pub struct Engine {
    params: RegressorParams,
    sampler: Sampler,
    atlas: Arc<Atlas>,
}

const BATCH_ROWS: usize = 256;

impl Engine {
    pub fn new(params: RegressorParams, sampler: Sampler, atlas: Arc<Atlas>) -> Result<Self, TaskError> {
        params.check_layout(sampler.layout())?;
        params.check_mode(OutputMode::AtlasCoord)?;
        Ok(Self { params, sampler, atlas })
    }

    pub fn params(&self) -> &RegressorParams {
        &self.params
    }

    pub fn sampler(&self) -> &Sampler {
        &self.sampler
    }

    pub fn shared_atlas(&self) -> Arc<Atlas> {
        Arc::clone(&self.atlas)
    }

    /// Allocation-free prediction for latency-sensitive callers.
    pub fn predict_with(&self, volume: &Volume, p: WorldPoint, scratch: &mut QueryScratch) -> NormalizedCoord {
        self.sampler.extract_into(volume, p, &mut scratch.descriptor);
        let out = self
            .params
            .forward_with(&scratch.descriptor, &mut scratch.net)
            .expect("descriptor length fixed by construction");
        NormalizedCoord(out)
    }

    pub fn scratch(&self) -> QueryScratch {
        QueryScratch {
            descriptor: vec![0.0; self.sampler.len()],
            net: Scratch::new(&self.params.architecture()),
        }
    }
}

/// Reusable buffers for [`Engine::predict_with`].
#[derive(Debug, Clone)]
pub struct QueryScratch {
    descriptor: Vec<f32>,
    net: Scratch<f32>,
}

impl PositionModel for Engine {
    fn atlas(&self) -> &Atlas {
        &self.atlas
    }

    fn predict(&self, volume: &Volume, p: WorldPoint) -> NormalizedCoord {
        let mut scratch = self.scratch();
        self.predict_with(volume, p, &mut scratch)
    }

    /// Chunked extraction plus one GEMM-based forward pass per chunk.
    fn predict_batch(&self, volume: &Volume, points: &[WorldPoint]) -> Vec<NormalizedCoord> {
        let len = self.sampler.len();
        let mut x = vec![0.0f32; BATCH_ROWS * len];
        let mut out = Vec::with_capacity(points.len());
        for chunk in points.chunks(BATCH_ROWS) {
            let rows = &mut x[..chunk.len() * len];
            for (row, &p) in rows.chunks_exact_mut(len).zip(chunk) {
                self.sampler.extract_into(volume, p, row);
            }
            let trace = self
                .params
                .forward_batch(rows, chunk.len())
                .expect("batch shape fixed by construction");
            out.extend(
                trace
                    .out
                    .chunks_exact(3)
                    .map(|c| NormalizedCoord([c[0] as f64, c[1] as f64, c[2] as f64])),
            );
        }
        out
    }
}

/// Exact coordinate function of a synthetic subject: `to_normalized(psi(p))`.
/// The volume argument is ignored.
#[derive(Debug, Clone)]
pub struct OracleEngine {
    atlas: Arc<Atlas>,
    field: DeformationField,
}

impl OracleEngine {
    pub fn new(atlas: Arc<Atlas>, field: DeformationField) -> Self {
        Self { atlas, field }
    }

    pub fn field(&self) -> &DeformationField {
        &self.field
    }
}

impl PositionModel for OracleEngine {
    fn atlas(&self) -> &Atlas {
        &self.atlas
    }

    fn predict(&self, _volume: &Volume, p: WorldPoint) -> NormalizedCoord {
        self.atlas.to_normalized(self.field.map(p))
    }
}

/// Trained displacement-mode regressor.
#[derive(Debug, Clone)]
pub struct LandmarkModel {
    params: RegressorParams,
    sampler: Sampler,
}

impl LandmarkModel {
    pub fn new(params: RegressorParams, sampler: Sampler) -> Result<Self, TaskError> {
        params.check_layout(sampler.layout())?;
        params.check_mode(OutputMode::DisplacementMm)?;
        Ok(Self { params, sampler })
    }

    pub fn params(&self) -> &RegressorParams {
        &self.params
    }
}

impl DisplacementModel for LandmarkModel {
    fn displacement(&self, volume: &Volume, p: WorldPoint) -> [f64; 3] {
        let d = self.sampler.extract(volume, p);
        self.params
            .forward(&d.values)
            .expect("descriptor length fixed by construction")
    }
}

/// `g(p) = damping * (landmark - p)`.
#[derive(Debug, Clone, Copy)]
pub struct LandmarkOracle {
    pub landmark: WorldPoint,
    pub damping: f64,
}

impl DisplacementModel for LandmarkOracle {
    fn displacement(&self, _volume: &Volume, p: WorldPoint) -> [f64; 3] {
        (self.landmark - p).map(|v| v * self.damping)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub coord: NormalizedCoord,
    pub atlas_point: WorldPoint,
    pub label: u8,
    pub label_name: String,
    /// Wall-clock time of descriptor extraction plus forward pass.
    pub latency_us: f64,
}

pub fn query(model: &dyn PositionModel, volume: &Volume, p: WorldPoint) -> QueryResult {
    let t0 = Instant::now();
    let coord = model.predict(volume, p);
    let latency_us = t0.elapsed().as_secs_f64() * 1e6;
    describe(model.atlas(), coord, latency_us)
}

/// [`query`] through the allocation-free engine path.
pub fn query_engine(engine: &Engine, volume: &Volume, p: WorldPoint, scratch: &mut QueryScratch) -> QueryResult {
    let t0 = Instant::now();
    let coord = engine.predict_with(volume, p, scratch);
    let latency_us = t0.elapsed().as_secs_f64() * 1e6;
    describe(engine.atlas(), coord, latency_us)
}

fn describe(atlas: &Atlas, coord: NormalizedCoord, latency_us: f64) -> QueryResult {
    let hit = atlas.label_at(coord);
    QueryResult {
        coord,
        atlas_point: atlas.from_normalized(coord),
        label: hit.label,
        label_name: hit.name,
        latency_us,
    }
}

pub const DEFAULT_GRID_MM: f64 = 3.0;

/// Query positions along one axis, in voxel units of the output grid.
///
/// Returns the grid coordinates (voxel-index space) and, for each voxel, the
/// index of its nearest grid coordinate.
fn axis_grid(n: usize, spacing: f64, grid_mm: f64) -> (Vec<f64>, Vec<usize>) {
    if grid_mm <= spacing || n == 1 {
        return ((0..n).map(|i| i as f64).collect(), (0..n).collect());
    }
    let step = grid_mm / spacing;
    let extent = (n - 1) as f64;
    let count = (extent / step).floor() as usize + 1;
    let start = (extent - (count - 1) as f64 * step) / 2.0;
    let coords: Vec<f64> = (0..count).map(|k| start + k as f64 * step).collect();
    let nearest = (0..n)
        .map(|i| {
            let k = ((i as f64 - start) / step).round();
            k.clamp(0.0, (count - 1) as f64) as usize
        })
        .collect();
    (coords, nearest)
}

/// Label-transfer segmentation: queries a `grid_mm` lattice over the
/// volume, looks each prediction up in the atlas mask, and fills every voxel
/// from its nearest lattice point. Axes whose spacing is at least `grid_mm`
/// are queried at every voxel.
pub fn segment(model: &dyn PositionModel, volume: &Volume, grid_mm: f64) -> Result<LabelVolume, TaskError> {
    if !(grid_mm > 0.0) {
        return Err(TaskError::Invalid(format!("grid_mm must be positive, got {grid_mm}")));
    }
    let g = *volume.geometry();
    let axes: Vec<(Vec<f64>, Vec<usize>)> = (0..3)
        .map(|a| axis_grid(g.dims[a], g.spacing[a], grid_mm))
        .collect();
    let (gx, gy, gz) = (&axes[0].0, &axes[1].0, &axes[2].0);
    let mut points = Vec::with_capacity(gx.len() * gy.len() * gz.len());
    for &k in gz {
        for &j in gy {
            for &i in gx {
                points.push(WorldPoint::new(
                    g.origin[0] + i * g.spacing[0],
                    g.origin[1] + j * g.spacing[1],
                    g.origin[2] + k * g.spacing[2],
                ));
            }
        }
    }
    let atlas = model.atlas();
    let labels: Vec<u8> = model
        .predict_batch(volume, &points)
        .into_iter()
        .map(|c| atlas.label_at(c).label)
        .collect();
    let (nx, ny) = (gx.len(), gy.len());
    let (mx, my, mz) = (&axes[0].1, &axes[1].1, &axes[2].1);
    let mut out = Vec::with_capacity(g.len());
    for &kk in mz {
        for &jj in my {
            let row = (kk * ny + jj) * nx;
            out.extend(mx.iter().map(|&ii| labels[row + ii]));
        }
    }
    Ok(LabelVolume::new(g, out)?)
}

/// `2 sum_l TP_l / sum_l (|pred_l| + |gt_l|)` over the nonzero labels present in `gt`.
///
/// Returns 1.0 when `gt` has no foreground and `pred` has none of its labels.
pub fn dice_micro(pred: &LabelVolume, gt: &LabelVolume) -> Result<f64, TaskError> {
    pred.geometry().check_same(gt.geometry())?;
    let mut present = [false; 256];
    for &l in gt.voxels() {
        present[l as usize] = true;
    }
    present[0] = false;
    let (mut tp, mut total) = (0u64, 0u64);
    for (&p, &t) in pred.voxels().iter().zip(gt.voxels()) {
        if present[t as usize] {
            total += 1;
            tp += (p == t) as u64;
        }
        if present[p as usize] {
            total += 1;
        }
    }
    Ok(if total == 0 { 1.0 } else { 2.0 * tp as f64 / total as f64 })
}

/// Per-label Dice over the nonzero labels present in `gt`.
pub fn dice_per_label(pred: &LabelVolume, gt: &LabelVolume) -> Result<BTreeMap<u8, f64>, TaskError> {
    pred.geometry().check_same(gt.geometry())?;
    let mut tp = [0u64; 256];
    let mut np = [0u64; 256];
    let mut ng = [0u64; 256];
    for (&p, &t) in pred.voxels().iter().zip(gt.voxels()) {
        np[p as usize] += 1;
        ng[t as usize] += 1;
        if p == t {
            tp[p as usize] += 1;
        }
    }
    Ok((1..=255u8)
        .filter(|&l| ng[l as usize] > 0)
        .map(|l| {
            let l_ = l as usize;
            (l, 2.0 * tp[l_] as f64 / (np[l_] + ng[l_]) as f64)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NavigationOptions {
    pub max_iters: usize,
    pub tol_mm: f64,
    /// Fraction of the predicted correction applied per step.
    pub damping: f64,
}

impl Default for NavigationOptions {
    fn default() -> Self {
        Self {
            max_iters: 50,
            tol_mm: 0.1,
            damping: 1.0,
        }
    }
}

impl NavigationOptions {
    fn validate(&self) -> Result<(), TaskError> {
        if self.max_iters == 0 {
            return Err(TaskError::Invalid("max_iters must be at least 1".into()));
        }
        if !(self.tol_mm >= 0.0) || !(self.damping > 0.0) {
            return Err(TaskError::Invalid(format!(
                "need tol_mm >= 0 and damping > 0, got {} and {}",
                self.tol_mm, self.damping
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavigationResult {
    pub final_point: WorldPoint,
    /// Start point followed by the point after every update.
    pub path: Vec<WorldPoint>,
    /// Number of updates (entries of `path` after the start).
    pub iterations: usize,
    pub converged: bool,
}

/// Generic fixed-point navigation `p <- clamp(p + damping * step(p))`.
///
/// Once a proposed step is shorter than `tol_mm` it is still applied, as a
/// refinement of the last path point rather than as a new iteration, and the
/// run is reported converged.
fn iterate(
    geometry: &Geometry,
    start: WorldPoint,
    opts: &NavigationOptions,
    mut step: impl FnMut(WorldPoint) -> [f64; 3],
) -> Result<NavigationResult, TaskError> {
    opts.validate()?;
    let mut p = geometry.clamp(start);
    let mut path = vec![p];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iters {
        let s = step(p).map(|v| v * opts.damping);
        let next = geometry.clamp(p.offset(s));
        if !next.is_finite() {
            break;
        }
        if norm(s) < opts.tol_mm {
            p = next;
            *path.last_mut().expect("path starts non-empty") = p;
            converged = true;
            break;
        }
        p = next;
        path.push(p);
        iterations += 1;
    }
    Ok(NavigationResult {
        final_point: p,
        path,
        iterations,
        converged,
    })
}

/// Moves `start` until the model's coordinate at the point equals `target`,
/// with updates `scale_mm * (target - f(p))`.
pub fn navigate(
    model: &dyn PositionModel,
    volume: &Volume,
    target: NormalizedCoord,
    start: WorldPoint,
    opts: &NavigationOptions,
) -> Result<NavigationResult, TaskError> {
    let scale = model.atlas().scale_mm();
    iterate(volume.geometry(), start, opts, |p| {
        let f = model.predict(volume, p).0;
        [0, 1, 2].map(|a| scale * (target.0[a] - f[a]))
    })
}

/// Normalizes `source_point` in the source volume and navigates to the same
/// coordinate in the target volume, starting from its center.
pub fn match_point(
    model: &dyn PositionModel,
    source: &Volume,
    source_point: WorldPoint,
    target: &Volume,
    opts: &NavigationOptions,
) -> Result<NavigationResult, TaskError> {
    let c = model.predict(source, source_point);
    navigate(model, target, c, target.geometry().center(), opts)
}

/// Follows predicted displacements to a landmark.
pub fn navigate_landmark(
    model: &dyn DisplacementModel,
    volume: &Volume,
    start: WorldPoint,
    opts: &NavigationOptions,
) -> Result<NavigationResult, TaskError> {
    iterate(volume.geometry(), start, opts, |p| model.displacement(volume, p))
}

pub const DEFAULT_AGENT_OFFSET_MM: f64 = 25.0;

/// Volume center plus `+-offset_mm` along each axis (7 starts), clamped to bounds.
pub fn default_starts(geometry: &Geometry, offset_mm: f64) -> Vec<WorldPoint> {
    let c = geometry.center();
    let mut starts = vec![c];
    for a in 0..3 {
        for sign in [1.0, -1.0] {
            let mut d = [0.0; 3];
            d[a] = sign * offset_mm;
            starts.push(geometry.clamp(c.offset(d)));
        }
    }
    starts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiAgentResult {
    pub point: WorldPoint,
    pub agents: Vec<NavigationResult>,
}

pub fn multi_agent_landmark(
    model: &dyn DisplacementModel,
    volume: &Volume,
    starts: &[WorldPoint],
    opts: &NavigationOptions,
) -> Result<MultiAgentResult, TaskError> {
    if starts.is_empty() {
        return Err(TaskError::Invalid("multi-agent navigation needs at least one start".into()));
    }
    let agents = starts
        .iter()
        .map(|&s| navigate_landmark(model, volume, s, opts))
        .collect::<Result<Vec<_>, _>>()?;
    let finals: Vec<WorldPoint> = agents.iter().map(|r| r.final_point).collect();
    Ok(MultiAgentResult {
        point: coordinate_median(&finals),
        agents,
    })
}

/// Coordinate-wise median; averages the two middle values for even counts.
pub fn coordinate_median(points: &[WorldPoint]) -> WorldPoint {
    let axis = |f: fn(&WorldPoint) -> f64| {
        let v: Vec<f64> = points.iter().map(f).collect();
        crate::training::median(&v)
    };
    WorldPoint::new(axis(|p| p.x), axis(|p| p.y), axis(|p| p.z))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityPoint {
    pub threshold_mm: f64,
    pub sensitivity: f64,
}

/// Empirical CDF of `errors_mm` at each threshold (fraction `<= threshold`).
pub fn sensitivity_at_thresholds(errors_mm: &[f64], thresholds_mm: &[f64]) -> Result<Vec<SensitivityPoint>, TaskError> {
    if errors_mm.is_empty() {
        return Err(TaskError::Invalid("no errors to evaluate".into()));
    }
    let n = errors_mm.len() as f64;
    Ok(thresholds_mm
        .iter()
        .map(|&t| SensitivityPoint {
            threshold_mm: t,
            sensitivity: errors_mm.iter().filter(|&&e| e <= t).count() as f64 / n,
        })
        .collect())
}

/// Sensitivity-vs-distance table; always contains the 5 mm and 10 mm points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrocCurve {
    pub points: Vec<SensitivityPoint>,
}

impl FrocCurve {
    pub fn at(&self, threshold_mm: f64) -> Option<f64> {
        self.points
            .iter()
            .find(|p| p.threshold_mm == threshold_mm)
            .map(|p| p.sensitivity)
    }
}

pub fn froc_curve(errors_mm: &[f64], thresholds_mm: &[f64]) -> Result<FrocCurve, TaskError> {
    let mut t: Vec<f64> = thresholds_mm.iter().copied().chain([5.0, 10.0]).collect();
    t.sort_by(f64::total_cmp);
    t.dedup();
    Ok(FrocCurve {
        points: sensitivity_at_thresholds(errors_mm, &t)?,
    })
}

/// One CSV row per case: `case,error_mm`.
pub fn errors_csv(cases: &[(String, f64)]) -> String {
    let mut s = String::from("case,error_mm\n");
    for (case, e) in cases {
        s.push_str(&format!("{case},{e}\n"));
    }
    s
}
