//! Sparse "3.5D" descriptor extraction.
//!
//! A descriptor is a flat vector of window-normalized intensities read by
//! nearest-neighbor lookup at fixed millimeter offsets around a query point:
//! three orthogonal 2D plane grids followed by a ladder of 3D cube grids at
//! increasing step sizes. Offsets live in world millimeters, so volumes of any
//! spacing are sampled without resampling the image.
//!
//! Offset order is part of the model file contract (see
//! [`DescriptorLayout::fingerprint`]): planes in listed order, then cubes in
//! listed order; inside each grid indices run lexicographically with the first
//! in-grid axis fastest.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::volume::{Volume, WorldPoint};

#[derive(Debug, Error, PartialEq)]
pub enum LayoutError {
    #[error("grid side {0} must be odd and positive so the grid centers on the query point")]
    EvenSide(usize),
    #[error("grid step {0} mm must be finite and positive")]
    BadStep(f64),
    #[error("layout has no grids")]
    Empty,
    #[error("intensity window lo={lo} must be below hi={hi}")]
    BadWindow { lo: f32, hi: f32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }

    /// The two in-plane axes, fastest first.
    fn in_plane(self) -> [usize; 2] {
        match self {
            Axis::X => [1, 2],
            Axis::Y => [0, 2],
            Axis::Z => [0, 1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneGridSpec {
    pub normal: Axis,
    pub side: usize,
    pub step_mm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubeGridSpec {
    pub side: usize,
    pub step_mm: f64,
}

fn check_grid(side: usize, step_mm: f64) -> Result<(), LayoutError> {
    if side % 2 == 0 {
        return Err(LayoutError::EvenSide(side));
    }
    if !(step_mm.is_finite() && step_mm > 0.0) {
        return Err(LayoutError::BadStep(step_mm));
    }
    Ok(())
}

/// Ordered list of plane and cube grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LayoutRepr")]
pub struct DescriptorLayout {
    planes: Vec<PlaneGridSpec>,
    cubes: Vec<CubeGridSpec>,
}

#[derive(Deserialize)]
struct LayoutRepr {
    planes: Vec<PlaneGridSpec>,
    cubes: Vec<CubeGridSpec>,
}

impl TryFrom<LayoutRepr> for DescriptorLayout {
    type Error = LayoutError;
    fn try_from(r: LayoutRepr) -> Result<Self, LayoutError> {
        DescriptorLayout::new(r.planes, r.cubes)
    }
}

/// Plane side of the default layout.
pub const PLANE_SIDE: usize = 27;
/// Plane step of the default layout, mm.
pub const PLANE_STEP_MM: f64 = 4.0;
/// Cube side of the default layout.
pub const CUBE_SIDE: usize = 9;
/// Cube steps of the default layout, mm.
pub const CUBE_STEPS_MM: [f64; 7] = [2.0, 3.0, 5.0, 8.0, 12.0, 28.0, 64.0];

impl DescriptorLayout {
    pub fn new(planes: Vec<PlaneGridSpec>, cubes: Vec<CubeGridSpec>) -> Result<Self, LayoutError> {
        if planes.is_empty() && cubes.is_empty() {
            return Err(LayoutError::Empty);
        }
        for p in &planes {
            check_grid(p.side, p.step_mm)?;
        }
        for c in &cubes {
            check_grid(c.side, c.step_mm)?;
        }
        Ok(Self { planes, cubes })
    }

    /// Three 27x27 planes at 4 mm (normals x, y, z) and seven 9x9x9 cubes at
    /// 2, 3, 5, 8, 12, 28 and 64 mm: 7290 samples.
    pub fn default_layout() -> Self {
        let planes = [Axis::X, Axis::Y, Axis::Z]
            .into_iter()
            .map(|normal| PlaneGridSpec {
                normal,
                side: PLANE_SIDE,
                step_mm: PLANE_STEP_MM,
            })
            .collect();
        let cubes = CUBE_STEPS_MM
            .into_iter()
            .map(|step_mm| CubeGridSpec {
                side: CUBE_SIDE,
                step_mm,
            })
            .collect();
        Self { planes, cubes }
    }

    pub fn planes(&self) -> &[PlaneGridSpec] {
        &self.planes
    }

    pub fn cubes(&self) -> &[CubeGridSpec] {
        &self.cubes
    }

    pub fn total_len(&self) -> usize {
        self.planes.iter().map(|p| p.side * p.side).sum::<usize>()
            + self.cubes.iter().map(|c| c.side.pow(3)).sum::<usize>()
    }

    /// One millimeter offset per descriptor element, in descriptor order.
    pub fn offsets(&self) -> Vec<[f64; 3]> {
        let mut out = Vec::with_capacity(self.total_len());
        for p in &self.planes {
            let h = (p.side / 2) as i64;
            let [fast, slow] = p.normal.in_plane();
            for b in -h..=h {
                for a in -h..=h {
                    let mut o = [0.0; 3];
                    o[fast] = a as f64 * p.step_mm;
                    o[slow] = b as f64 * p.step_mm;
                    out.push(o);
                }
            }
        }
        for c in &self.cubes {
            let h = (c.side / 2) as i64;
            for k in -h..=h {
                for j in -h..=h {
                    for i in -h..=h {
                        out.push([
                            i as f64 * c.step_mm,
                            j as f64 * c.step_mm,
                            k as f64 * c.step_mm,
                        ]);
                    }
                }
            }
        }
        out
    }

    /// Canonical text form, one grid per line.
    pub fn canonical_text(&self) -> String {
        let mut s = String::new();
        for p in &self.planes {
            let _ = writeln!(s, "plane {} {} {:?}", p.normal.name(), p.side, p.step_mm);
        }
        for c in &self.cubes {
            let _ = writeln!(s, "cube {} {:?}", c.side, c.step_mm);
        }
        s
    }

    /// 64-bit FNV-1a hash of [`canonical_text`](Self::canonical_text).
    pub fn fingerprint(&self) -> u64 {
        fnv1a64(self.canonical_text().as_bytes())
    }
}

impl Default for DescriptorLayout {
    fn default() -> Self {
        Self::default_layout()
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET_BASIS, |h, &b| (h ^ b as u64).wrapping_mul(PRIME))
}

/// Affine intensity window mapping `[lo, hi]` onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f32; 2]", into = "[f32; 2]")]
pub struct IntensityWindow {
    lo: f32,
    hi: f32,
}

impl IntensityWindow {
    /// CT-like default, -1024..3071.
    pub const CT: IntensityWindow = IntensityWindow {
        lo: -1024.0,
        hi: 3071.0,
    };

    pub fn new(lo: f32, hi: f32) -> Result<Self, LayoutError> {
        if lo < hi && lo.is_finite() && hi.is_finite() {
            Ok(Self { lo, hi })
        } else {
            Err(LayoutError::BadWindow { lo, hi })
        }
    }

    pub fn lo(&self) -> f32 {
        self.lo
    }

    pub fn hi(&self) -> f32 {
        self.hi
    }

    #[inline]
    pub fn normalize(&self, raw: f32) -> f32 {
        (raw.clamp(self.lo, self.hi) - self.lo) / (self.hi - self.lo)
    }
}

impl Default for IntensityWindow {
    fn default() -> Self {
        Self::CT
    }
}

impl TryFrom<[f32; 2]> for IntensityWindow {
    type Error = LayoutError;
    fn try_from(a: [f32; 2]) -> Result<Self, LayoutError> {
        Self::new(a[0], a[1])
    }
}

impl From<IntensityWindow> for [f32; 2] {
    fn from(w: IntensityWindow) -> Self {
        [w.lo, w.hi]
    }
}

/// Flat descriptor, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    pub values: Vec<f32>,
}

impl Descriptor {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// One grid as a tensor product of per-axis offsets. `order` lists the axes
/// from slowest to fastest varying in descriptor order.
#[derive(Debug, Clone)]
struct Block {
    axis_offsets: [Vec<f64>; 3],
    order: [usize; 3],
}

impl Block {
    fn from_layout(layout: &DescriptorLayout) -> Vec<Block> {
        let centered = |side: usize, step: f64| -> Vec<f64> {
            let h = (side / 2) as i64;
            (-h..=h).map(|a| a as f64 * step).collect()
        };
        let mut blocks = Vec::new();
        for p in layout.planes() {
            let [fast, slow] = p.normal.in_plane();
            let n = p.normal.index();
            let mut axis_offsets: [Vec<f64>; 3] = Default::default();
            axis_offsets[n] = vec![0.0];
            axis_offsets[fast] = centered(p.side, p.step_mm);
            axis_offsets[slow] = centered(p.side, p.step_mm);
            blocks.push(Block {
                axis_offsets,
                order: [n, slow, fast],
            });
        }
        for c in layout.cubes() {
            let line = centered(c.side, c.step_mm);
            blocks.push(Block {
                axis_offsets: [line.clone(), line.clone(), line],
                order: [2, 1, 0],
            });
        }
        blocks
    }
}

/// A layout with its offsets expanded, plus the intensity window.
#[derive(Debug, Clone)]
pub struct Sampler {
    layout: DescriptorLayout,
    window: IntensityWindow,
    offsets: Vec<[f64; 3]>,
    blocks: Vec<Block>,
}

impl Sampler {
    pub fn new(layout: DescriptorLayout, window: IntensityWindow) -> Self {
        let offsets = layout.offsets();
        let blocks = Block::from_layout(&layout);
        Self {
            layout,
            window,
            offsets,
            blocks,
        }
    }

    pub fn layout(&self) -> &DescriptorLayout {
        &self.layout
    }

    pub fn window(&self) -> IntensityWindow {
        self.window
    }

    pub fn offsets(&self) -> &[[f64; 3]] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn extract(&self, volume: &Volume, p: WorldPoint) -> Descriptor {
        let mut values = vec![0.0; self.offsets.len()];
        self.extract_into(volume, p, &mut values);
        Descriptor { values }
    }

    /// Writes the descriptor of `p` into `out` (length must equal the layout length).
    ///
    /// Each element is the nearest voxel to `p + offset`, rounding half away
    /// from zero, or the volume background outside the grid. Voxel indices
    /// are resolved once per axis and grid, which gives the same result as
    /// rounding every offset point separately.
    pub fn extract_into(&self, volume: &Volume, p: WorldPoint, out: &mut [f32]) {
        assert_eq!(out.len(), self.offsets.len(), "descriptor buffer length");
        let g = volume.geometry();
        let voxels = volume.voxels();
        let fill = self.window.normalize(volume.background());
        let strides = [1, g.dims[0], g.dims[0] * g.dims[1]];
        let pv = p.to_array();
        // flat-index contribution per axis offset; usize::MAX marks outside
        let mut index: [Vec<usize>; 3] = Default::default();
        let mut pos = 0;
        for block in &self.blocks {
            for a in 0..3 {
                index[a].clear();
                index[a].extend(block.axis_offsets[a].iter().map(|&o| {
                    let r = ((pv[a] + o - g.origin[a]) / g.spacing[a]).round();
                    if r >= 0.0 && r < g.dims[a] as f64 {
                        r as usize * strides[a]
                    } else {
                        usize::MAX
                    }
                }));
            }
            let [s0, s1, s2] = block.order;
            for &i0 in &index[s0] {
                for &i1 in &index[s1] {
                    for &i2 in &index[s2] {
                        out[pos] = if i0 == usize::MAX || i1 == usize::MAX || i2 == usize::MAX {
                            fill
                        } else {
                            self.window.normalize(voxels[i0 + i1 + i2])
                        };
                        pos += 1;
                    }
                }
            }
        }
    }

    /// Reference implementation of [`Sampler::extract_into`]: one rounding
    /// per descriptor element.
    pub fn extract_pointwise(&self, volume: &Volume, p: WorldPoint, out: &mut [f32]) {
        assert_eq!(out.len(), self.offsets.len(), "descriptor buffer length");
        let fill = self.window.normalize(volume.background());
        for (o, slot) in self.offsets.iter().zip(out.iter_mut()) {
            let q = WorldPoint::new(p.x + o[0], p.y + o[1], p.z + o[2]);
            *slot = match volume.geometry().nearest_index(q) {
                Some(idx) => self.window.normalize(volume.voxels()[idx]),
                None => fill,
            };
        }
    }
}

pub fn default_layout() -> DescriptorLayout {
    DescriptorLayout::default_layout()
}

pub fn normalize_intensity(raw: f32, window: IntensityWindow) -> f32 {
    window.normalize(raw)
}

pub fn extract(
    volume: &Volume,
    p: WorldPoint,
    layout: &DescriptorLayout,
    window: IntensityWindow,
) -> Descriptor {
    Sampler::new(layout.clone(), window).extract(volume, p)
}
