//! Axis-aligned voxel volumes and their world geometry.
//!
//! All geometry is in millimeters. Voxel `(i, j, k)` is stored at flat index
//! `i + nx * (j + ny * k)` and its center sits at `origin + (i, j, k) * spacing`.

use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("invalid dimensions {0:?}: every axis needs at least one voxel")]
    EmptyDims([usize; 3]),
    #[error("invalid spacing {0:?}: components must be finite and positive")]
    BadSpacing([f64; 3]),
    #[error("non-finite origin {0:?}")]
    BadOrigin([f64; 3]),
    #[error("voxel buffer holds {actual} values but dims {dims:?} need {expected}")]
    LengthMismatch {
        dims: [usize; 3],
        expected: usize,
        actual: usize,
    },
    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),
    #[error("voxel value {value} at index {index} is not a valid label (expected an integer in 0..=255)")]
    InvalidLabel { index: usize, value: f32 },
}

/// A point in patient/world space, millimeters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct WorldPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl WorldPoint {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub const fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn offset(self, d: [f64; 3]) -> Self {
        Self::new(self.x + d[0], self.y + d[1], self.z + d[2])
    }

    pub fn distance(self, other: WorldPoint) -> f64 {
        norm(other - self)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl From<[f64; 3]> for WorldPoint {
    fn from(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

impl From<WorldPoint> for [f64; 3] {
    fn from(p: WorldPoint) -> Self {
        p.to_array()
    }
}

impl Add<[f64; 3]> for WorldPoint {
    type Output = WorldPoint;
    fn add(self, d: [f64; 3]) -> WorldPoint {
        self.offset(d)
    }
}

impl Sub for WorldPoint {
    type Output = [f64; 3];
    fn sub(self, o: WorldPoint) -> [f64; 3] {
        [self.x - o.x, self.y - o.y, self.z - o.z]
    }
}

impl fmt::Display for WorldPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

pub(crate) fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Grid shape plus the diagonal world affine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
}

impl Geometry {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self, VolumeError> {
        if dims.contains(&0) {
            return Err(VolumeError::EmptyDims(dims));
        }
        if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(VolumeError::BadSpacing(spacing));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(VolumeError::BadOrigin(origin));
        }
        Ok(Self { dims, spacing, origin })
    }

    /// Geometry whose voxel grid is centered on the world origin.
    pub fn centered(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self, VolumeError> {
        let origin = [0, 1, 2].map(|a| -((dims[a].max(1) - 1) as f64) * spacing[a] / 2.0);
        Self::new(dims, spacing, origin)
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn flat_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    /// Continuous voxel coordinates of `p`; no clamping.
    #[inline]
    pub fn world_to_voxel(&self, p: WorldPoint) -> [f64; 3] {
        [
            (p.x - self.origin[0]) / self.spacing[0],
            (p.y - self.origin[1]) / self.spacing[1],
            (p.z - self.origin[2]) / self.spacing[2],
        ]
    }

    /// World position of voxel center `(i, j, k)`; indices may lie outside the grid.
    #[inline]
    pub fn voxel_to_world(&self, i: i64, j: i64, k: i64) -> WorldPoint {
        WorldPoint::new(
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
            self.origin[2] + k as f64 * self.spacing[2],
        )
    }

    /// Flat index of the voxel nearest to `p`, or `None` outside the grid.
    ///
    /// Rounds half away from zero.
    #[inline]
    pub fn nearest_index(&self, p: WorldPoint) -> Option<usize> {
        let v = self.world_to_voxel(p);
        let mut idx = [0usize; 3];
        for a in 0..3 {
            let r = v[a].round();
            // NaN fails both comparisons and falls through to None.
            if !(r >= 0.0 && r < self.dims[a] as f64) {
                return None;
            }
            idx[a] = r as usize;
        }
        Some(self.flat_index(idx[0], idx[1], idx[2]))
    }

    /// World-space bounding box of voxel centers: (min corner, max corner).
    pub fn bounds(&self) -> (WorldPoint, WorldPoint) {
        let lo = self.voxel_to_world(0, 0, 0);
        let hi = self.voxel_to_world(
            self.dims[0] as i64 - 1,
            self.dims[1] as i64 - 1,
            self.dims[2] as i64 - 1,
        );
        (lo, hi)
    }

    pub fn center(&self) -> WorldPoint {
        let (lo, hi) = self.bounds();
        WorldPoint::new((lo.x + hi.x) / 2.0, (lo.y + hi.y) / 2.0, (lo.z + hi.z) / 2.0)
    }

    /// Projects `p` onto the box spanned by the voxel centers.
    pub fn clamp(&self, p: WorldPoint) -> WorldPoint {
        let (lo, hi) = self.bounds();
        WorldPoint::new(
            p.x.clamp(lo.x, hi.x),
            p.y.clamp(lo.y, hi.y),
            p.z.clamp(lo.z, hi.z),
        )
    }

    pub fn contains(&self, p: WorldPoint) -> bool {
        self.nearest_index(p).is_some()
    }

    pub fn check_same(&self, other: &Geometry) -> Result<(), VolumeError> {
        if self == other {
            Ok(())
        } else {
            Err(VolumeError::GeometryMismatch(format!(
                "{self:?} differs from {other:?}"
            )))
        }
    }
}

/// Scalar intensity volume. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    geometry: Geometry,
    voxels: Vec<f32>,
    background: f32,
}

impl Volume {
    /// Builds a volume whose out-of-bounds fill is the smallest voxel value
    /// (air for CT-like data).
    pub fn new(geometry: Geometry, voxels: Vec<f32>) -> Result<Self, VolumeError> {
        let background = voxels.iter().copied().fold(f32::INFINITY, f32::min);
        let background = if background.is_finite() { background } else { 0.0 };
        Self::with_background(geometry, voxels, background)
    }

    pub fn with_background(
        geometry: Geometry,
        voxels: Vec<f32>,
        background: f32,
    ) -> Result<Self, VolumeError> {
        let geometry = Geometry::new(geometry.dims, geometry.spacing, geometry.origin)?;
        if voxels.len() != geometry.len() {
            return Err(VolumeError::LengthMismatch {
                dims: geometry.dims,
                expected: geometry.len(),
                actual: voxels.len(),
            });
        }
        Ok(Self {
            geometry,
            voxels,
            background,
        })
    }

    pub fn from_fn(
        geometry: Geometry,
        background: f32,
        mut f: impl FnMut(WorldPoint) -> f32,
    ) -> Result<Self, VolumeError> {
        let voxels = map_centers(&geometry, &mut f);
        Self::with_background(geometry, voxels, background)
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn voxels(&self) -> &[f32] {
        &self.voxels
    }

    pub fn background(&self) -> f32 {
        self.background
    }

    /// Same voxels, different world placement.
    pub fn with_origin(&self, origin: [f64; 3]) -> Result<Self, VolumeError> {
        let g = Geometry::new(self.geometry.dims, self.geometry.spacing, origin)?;
        Self::with_background(g, self.voxels.clone(), self.background)
    }

    pub fn world_to_voxel(&self, p: WorldPoint) -> [f64; 3] {
        self.geometry.world_to_voxel(p)
    }

    pub fn voxel_to_world(&self, i: i64, j: i64, k: i64) -> WorldPoint {
        self.geometry.voxel_to_world(i, j, k)
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f32 {
        self.voxels[self.geometry.flat_index(i, j, k)]
    }

    /// Nearest-neighbor lookup; the background value outside the grid.
    #[inline]
    pub fn sample_nearest(&self, p: WorldPoint) -> f32 {
        match self.geometry.nearest_index(p) {
            Some(idx) => self.voxels[idx],
            None => self.background,
        }
    }

    /// Trilinear interpolation with background fill beyond the grid.
    ///
    /// Only used to generate synthetic data; queries go through
    /// [`Volume::sample_nearest`].
    pub fn sample_trilinear(&self, p: WorldPoint) -> f32 {
        let v = self.world_to_voxel(p);
        let base = v.map(f64::floor);
        let frac = [v[0] - base[0], v[1] - base[1], v[2] - base[2]];
        let dims = self.geometry.dims;
        let mut acc = 0.0f64;
        for corner in 0..8 {
            let off = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
            let mut w = 1.0;
            let mut inside = true;
            let mut idx = [0usize; 3];
            for a in 0..3 {
                let c = base[a] + off[a] as f64;
                w *= if off[a] == 1 { frac[a] } else { 1.0 - frac[a] };
                if c < 0.0 || c >= dims[a] as f64 {
                    inside = false;
                } else {
                    idx[a] = c as usize;
                }
            }
            if w == 0.0 {
                continue;
            }
            let value = if inside {
                self.voxels[self.geometry.flat_index(idx[0], idx[1], idx[2])]
            } else {
                self.background
            };
            acc += w * value as f64;
        }
        acc as f32
    }

    pub fn intensity_range(&self) -> (f32, f32) {
        self.voxels
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// Label volume; 0 is background.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    geometry: Geometry,
    voxels: Vec<u8>,
}

impl LabelVolume {
    pub fn new(geometry: Geometry, voxels: Vec<u8>) -> Result<Self, VolumeError> {
        let geometry = Geometry::new(geometry.dims, geometry.spacing, geometry.origin)?;
        if voxels.len() != geometry.len() {
            return Err(VolumeError::LengthMismatch {
                dims: geometry.dims,
                expected: geometry.len(),
                actual: voxels.len(),
            });
        }
        Ok(Self { geometry, voxels })
    }

    pub fn from_fn(geometry: Geometry, mut f: impl FnMut(WorldPoint) -> u8) -> Result<Self, VolumeError> {
        let voxels = map_centers(&geometry, &mut f);
        Self::new(geometry, voxels)
    }

    pub fn filled(geometry: Geometry, label: u8) -> Result<Self, VolumeError> {
        let n = geometry.len();
        Self::new(geometry, vec![label; n])
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn voxels(&self) -> &[u8] {
        &self.voxels
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> u8 {
        self.voxels[self.geometry.flat_index(i, j, k)]
    }

    /// Nearest voxel label, 0 outside the grid.
    #[inline]
    pub fn label_nearest(&self, p: WorldPoint) -> u8 {
        self.geometry
            .nearest_index(p)
            .map_or(0, |idx| self.voxels[idx])
    }

    /// Converts an intensity volume holding integral values in `0..=255`.
    pub fn try_from_volume(v: &Volume) -> Result<Self, VolumeError> {
        let voxels = v
            .voxels()
            .iter()
            .enumerate()
            .map(|(index, &value)| {
                if value.fract() == 0.0 && (0.0..=255.0).contains(&value) {
                    Ok(value as u8)
                } else {
                    Err(VolumeError::InvalidLabel { index, value })
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(*v.geometry(), voxels)
    }

    pub fn to_volume(&self) -> Volume {
        let voxels = self.voxels.iter().map(|&l| l as f32).collect();
        Volume::with_background(self.geometry, voxels, 0.0).expect("geometry already validated")
    }
}

fn map_centers<T>(g: &Geometry, f: &mut impl FnMut(WorldPoint) -> T) -> Vec<T> {
    let [nx, ny, nz] = g.dims;
    let mut out = Vec::with_capacity(g.len());
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                out.push(f(g.voxel_to_world(i as i64, j as i64, k as i64)));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(spacing: [f64; 3], origin: [f64; 3]) -> Geometry {
        Geometry::new([3, 3, 3], spacing, origin).unwrap()
    }

    #[test]
    fn world_to_voxel_examples() {
        let g = geom([2.0; 3], [0.0; 3]);
        assert_eq!(g.world_to_voxel(WorldPoint::new(0.0, 0.0, 0.0)), [0.0, 0.0, 0.0]);
        assert_eq!(
            g.world_to_voxel(WorldPoint::new(1.9, 4.0, -2.0)),
            [0.95, 2.0, -1.0]
        );
        let g = geom([1.0, 1.0, 5.0], [10.0, 20.0, 400.0]);
        assert_eq!(g.world_to_voxel(WorldPoint::new(10.0, 20.0, 405.0)), [0.0, 0.0, 1.0]);
    }

    #[test]
    fn voxel_to_world_examples() {
        let g = geom([2.0; 3], [0.0; 3]);
        assert_eq!(g.voxel_to_world(0, 0, 0), WorldPoint::new(0.0, 0.0, 0.0));
        assert_eq!(g.voxel_to_world(1, 2, 3), WorldPoint::new(2.0, 4.0, 6.0));
        let g = geom([1.0, 1.0, 5.0], [10.0, 20.0, 400.0]);
        assert_eq!(g.voxel_to_world(0, 0, 1), WorldPoint::new(10.0, 20.0, 405.0));
    }

    fn ramp() -> Volume {
        let g = geom([1.0; 3], [0.0; 3]);
        Volume::new(g, (0..27).map(|v| v as f32).collect()).unwrap()
    }

    #[test]
    fn nearest_rounds_half_away_from_zero() {
        let g = geom([2.0; 3], [0.0; 3]);
        let v = Volume::new(g, (0..27).map(|v| v as f32).collect()).unwrap();
        assert_eq!(v.sample_nearest(WorldPoint::new(1.9, 0.0, 0.0)), 1.0);
        assert_eq!(v.sample_nearest(WorldPoint::new(1.0, 0.0, 0.0)), 1.0);
        assert_eq!(v.sample_nearest(WorldPoint::new(0.99, 0.0, 0.0)), 0.0);
    }

    #[test]
    fn nearest_matches_brute_force_scan() {
        let v = ramp();
        let p = WorldPoint::new(1.2, 2.4, 0.5);
        // closest voxel center; scan order makes ties resolve to the larger index
        let mut best = (f64::INFINITY, 0.0f32);
        for k in 0..3 {
            for j in 0..3 {
                for i in 0..3 {
                    let d = p.distance(v.voxel_to_world(i, j, k));
                    if d <= best.0 {
                        best = (d, v.get(i as usize, j as usize, k as usize));
                    }
                }
            }
        }
        assert_eq!(best.1, 16.0);
        assert_eq!(v.sample_nearest(p), 16.0);
    }

    #[test]
    fn out_of_bounds_reads_background() {
        let v = ramp();
        assert_eq!(v.background(), 0.0);
        let v = Volume::with_background(*v.geometry(), v.voxels().to_vec(), -1024.0).unwrap();
        assert_eq!(v.sample_nearest(WorldPoint::new(1e6, 0.0, 0.0)), -1024.0);
        assert_eq!(v.sample_nearest(WorldPoint::new(-0.6, 0.0, 0.0)), -1024.0);
        assert_eq!(v.sample_nearest(WorldPoint::new(f64::NAN, 0.0, 0.0)), -1024.0);
    }

    #[test]
    fn construction_rejects_bad_geometry() {
        assert!(matches!(
            Geometry::new([0, 1, 1], [1.0; 3], [0.0; 3]),
            Err(VolumeError::EmptyDims(_))
        ));
        assert!(matches!(
            Geometry::new([1, 1, 1], [1.0, 0.0, 1.0], [0.0; 3]),
            Err(VolumeError::BadSpacing(_))
        ));
        let g = geom([1.0; 3], [0.0; 3]);
        assert!(matches!(
            Volume::new(g, vec![0.0; 26]),
            Err(VolumeError::LengthMismatch { expected: 27, actual: 26, .. })
        ));
    }

    #[test]
    fn trilinear_is_exact_on_grid_and_linear_between() {
        let v = ramp();
        assert_eq!(v.sample_trilinear(v.voxel_to_world(1, 2, 1)), 16.0);
        let mid = v.sample_trilinear(WorldPoint::new(0.5, 0.0, 0.0));
        assert!((mid - 0.5).abs() < 1e-6);
    }

    #[test]
    fn label_conversion_checks_range() {
        let v = ramp();
        let labels = LabelVolume::try_from_volume(&v).unwrap();
        assert_eq!(labels.get(2, 2, 2), 26);
        let bad = Volume::new(*v.geometry(), vec![0.5; 27]).unwrap();
        assert!(matches!(
            LabelVolume::try_from_volume(&bad),
            Err(VolumeError::InvalidLabel { index: 0, .. })
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn voxel_world_round_trip(
                i in 0i64..40, j in 0i64..40, k in 0i64..40,
                sx in 0.3f64..7.0, sy in 0.3f64..7.0, sz in 0.3f64..7.0,
                ox in -500.0f64..500.0, oy in -500.0f64..500.0, oz in -500.0f64..500.0,
            ) {
                let g = Geometry::new([40, 40, 40], [sx, sy, sz], [ox, oy, oz]).unwrap();
                let v = g.world_to_voxel(g.voxel_to_world(i, j, k));
                // Exact after rounding: the affine map is inverted up to float error.
                prop_assert_eq!([v[0].round() as i64, v[1].round() as i64, v[2].round() as i64], [i, j, k]);
                prop_assert!((v[0] - i as f64).abs() < 1e-9);
                prop_assert_eq!(g.nearest_index(g.voxel_to_world(i, j, k)), Some(g.flat_index(i as usize, j as usize, k as usize)));
            }

            #[test]
            fn nearest_is_piecewise_constant(
                i in 0usize..5, j in 0usize..5, k in 0usize..5,
                axis in 0usize..3, frac in -0.49f64..0.49,
                sx in 0.5f64..4.0, sy in 0.5f64..4.0, sz in 0.5f64..4.0,
            ) {
                let g = Geometry::new([5, 5, 5], [sx, sy, sz], [-3.0, 1.0, 7.0]).unwrap();
                let v = Volume::new(g, (0..125).map(|x| x as f32).collect()).unwrap();
                let c = g.voxel_to_world(i as i64, j as i64, k as i64);
                let min_s = sx.min(sy).min(sz);
                let mut d = [0.0; 3];
                d[axis] = frac * min_s;
                prop_assert_eq!(v.sample_nearest(c.offset(d)), v.get(i, j, k));
            }
        }
    }
}
