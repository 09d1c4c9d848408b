//! Residual MLP regressor.
//!
//! ```text
//! h0  = relu(P d + p)                 input projection, width 240
//! h   = h + W2 relu(W1 h + b1) + b2   8 blocks (16 hidden layers)
//! out = H h + c                       3 outputs
//! ```
//!
//! Parameters live in one flat vector, in model-file order: projection
//! weights (row-major) and bias, then per block `W1, b1, W2, b2`, then head
//! weights and bias. Gradients share that layout.

use std::fs;
use std::io;
use std::ops::Range;
use std::path::{Path, PathBuf};

use rand::RngCore;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, Real};
use crate::sampler::DescriptorLayout;

pub const DEFAULT_WIDTH: usize = 240;
pub const DEFAULT_BLOCKS: usize = 8;

const MAGIC: &[u8; 4] = b"BGPS";
const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 1 + 3 * 4;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("shape mismatch: expected {what} of length {expected}, got {actual}")]
    Shape {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("not a model file: {0}")]
    Format(String),
    #[error("unsupported model format version {0} (this build reads version {FORMAT_VERSION})")]
    Version(u32),
    #[error("model was trained for descriptor layout {found:#018x}, but layout {expected:#018x} is in use")]
    IncompatibleLayout { expected: u64, found: u64 },
    #[error("model outputs {found}, but {expected} is required")]
    WrongMode {
        expected: OutputMode,
        found: OutputMode,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// What the three outputs mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMode {
    /// Normalized atlas coordinates.
    AtlasCoord,
    /// World-mm displacement from the query point to a landmark.
    DisplacementMm,
}

impl OutputMode {
    fn code(self) -> u8 {
        match self {
            OutputMode::AtlasCoord => 0,
            OutputMode::DisplacementMm => 1,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(OutputMode::AtlasCoord),
            1 => Some(OutputMode::DisplacementMm),
            _ => None,
        }
    }
}

impl std::fmt::Display for OutputMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OutputMode::AtlasCoord => "atlas_coord",
            OutputMode::DisplacementMm => "displacement_mm",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_len: usize,
    pub width: usize,
    pub blocks: usize,
}

impl Architecture {
    pub const OUTPUTS: usize = 3;

    pub const fn new(input_len: usize, width: usize, blocks: usize) -> Self {
        Self {
            input_len,
            width,
            blocks,
        }
    }

    /// 240 wide, 8 two-layer blocks, input sized to `layout`.
    pub fn for_layout(layout: &DescriptorLayout) -> Self {
        Self::new(layout.total_len(), DEFAULT_WIDTH, DEFAULT_BLOCKS)
    }

    fn block_len(&self) -> usize {
        2 * (self.width * self.width + self.width)
    }

    pub fn param_count(&self) -> usize {
        self.width * self.input_len
            + self.width
            + self.blocks * self.block_len()
            + Self::OUTPUTS * self.width
            + Self::OUTPUTS
    }

    pub fn input_weights(&self) -> Range<usize> {
        0..self.width * self.input_len
    }

    pub fn input_bias(&self) -> Range<usize> {
        let s = self.width * self.input_len;
        s..s + self.width
    }

    pub fn block(&self, b: usize) -> BlockRanges {
        assert!(b < self.blocks);
        let ww = self.width * self.width;
        let base = self.input_bias().end + b * self.block_len();
        BlockRanges {
            w1: base..base + ww,
            b1: base + ww..base + ww + self.width,
            w2: base + ww + self.width..base + 2 * ww + self.width,
            b2: base + 2 * ww + self.width..base + self.block_len(),
        }
    }

    pub fn head_weights(&self) -> Range<usize> {
        let s = self.input_bias().end + self.blocks * self.block_len();
        s..s + Self::OUTPUTS * self.width
    }

    pub fn head_bias(&self) -> Range<usize> {
        let s = self.head_weights().end;
        s..s + Self::OUTPUTS
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockRanges {
    pub w1: Range<usize>,
    pub b1: Range<usize>,
    pub w2: Range<usize>,
    pub b2: Range<usize>,
}

/// How the output head starts out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadInit {
    /// All-zero head: an untrained model predicts exactly `(0, 0, 0)`.
    Zero,
    /// He-uniform like the hidden layers.
    HeUniform,
}

/// Regressor weights in element type `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    arch: Architecture,
    layout_hash: u64,
    output_mode: OutputMode,
    params: Vec<T>,
}

/// Persisted form of the regressor.
pub type RegressorParams = Network<f32>;

/// Uniform in `[0, 1)` from the top 53 bits.
fn unit_f64(rng: &mut Xoshiro256PlusPlus) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

impl<T: Real> Network<T> {
    pub fn zeros(arch: Architecture, layout_hash: u64, output_mode: OutputMode) -> Self {
        Self {
            arch,
            layout_hash,
            output_mode,
            params: vec![T::ZERO; arch.param_count()],
        }
    }

    /// He-uniform weights, zero biases, zero head.
    ///
    /// Weights are drawn in parameter order from xoshiro256++ seeded through
    /// splitmix64 (`seed_from_u64`): `w = (2u - 1) * sqrt(6 / fan_in)` with
    /// `u` built from the top 53 bits of each draw.
    pub fn init(arch: Architecture, layout_hash: u64, output_mode: OutputMode, seed: u64) -> Self {
        Self::init_with(arch, layout_hash, output_mode, seed, HeadInit::Zero)
    }

    pub fn init_with(
        arch: Architecture,
        layout_hash: u64,
        output_mode: OutputMode,
        seed: u64,
        head: HeadInit,
    ) -> Self {
        let mut net = Self::zeros(arch, layout_hash, output_mode);
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let mut fill = |params: &mut [T], range: Range<usize>, fan_in: usize| {
            let limit = (6.0 / fan_in as f64).sqrt();
            for w in &mut params[range] {
                *w = T::from_f64((2.0 * unit_f64(&mut rng) - 1.0) * limit);
            }
        };
        fill(&mut net.params, arch.input_weights(), arch.input_len);
        for b in 0..arch.blocks {
            let r = arch.block(b);
            fill(&mut net.params, r.w1, arch.width);
            fill(&mut net.params, r.w2, arch.width);
        }
        if head == HeadInit::HeUniform {
            fill(&mut net.params, arch.head_weights(), arch.width);
        }
        net
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn layout_hash(&self) -> u64 {
        self.layout_hash
    }

    pub fn output_mode(&self) -> OutputMode {
        self.output_mode
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            arch: self.arch,
            layout_hash: self.layout_hash,
            output_mode: self.output_mode,
            params: self.params.iter().map(|&x| U::from_f64(x.to_f64())).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|x| x.is_finite())
    }

    fn check_input(&self, actual: usize) -> Result<(), ModelError> {
        if actual == self.arch.input_len {
            Ok(())
        } else {
            Err(ModelError::Shape {
                what: "descriptor",
                expected: self.arch.input_len,
                actual,
            })
        }
    }

    pub fn check_layout(&self, layout: &DescriptorLayout) -> Result<(), ModelError> {
        let expected = layout.fingerprint();
        if self.layout_hash != expected {
            return Err(ModelError::IncompatibleLayout {
                expected,
                found: self.layout_hash,
            });
        }
        self.check_input(layout.total_len())
    }

    pub fn check_mode(&self, expected: OutputMode) -> Result<(), ModelError> {
        if self.output_mode == expected {
            Ok(())
        } else {
            Err(ModelError::WrongMode {
                expected,
                found: self.output_mode,
            })
        }
    }

    /// Single-descriptor forward pass.
    pub fn forward(&self, descriptor: &[f32]) -> Result<[f64; 3], ModelError> {
        let mut scratch = Scratch::new(&self.arch);
        self.forward_with(descriptor, &mut scratch)
    }

    /// Forward pass reusing caller-owned buffers; allocation-free.
    pub fn forward_with(&self, descriptor: &[f32], s: &mut Scratch<T>) -> Result<[f64; 3], ModelError> {
        self.check_input(descriptor.len())?;
        let a = &self.arch;
        let p = &self.params;
        s.resize(a);
        for (x, &d) in s.x.iter_mut().zip(descriptor) {
            *x = T::from_f32(d);
        }
        linalg::matvec(&p[a.input_weights()], &s.x, &p[a.input_bias()], &mut s.h);
        relu_in_place(&mut s.h);
        for b in 0..a.blocks {
            let r = a.block(b);
            linalg::matvec(&p[r.w1], &s.h, &p[r.b1], &mut s.t);
            relu_in_place(&mut s.t);
            linalg::matvec(&p[r.w2], &s.t, &p[r.b2], &mut s.u);
            for (h, &u) in s.h.iter_mut().zip(&s.u) {
                *h += u;
            }
        }
        let mut out = [T::ZERO; 3];
        linalg::matvec(&p[a.head_weights()], &s.h, &p[a.head_bias()], &mut out);
        Ok(out.map(|x| x.to_f64()))
    }

    /// Batched forward pass over `n` row-major descriptors, keeping every
    /// intermediate needed by [`Network::backward`].
    pub fn forward_batch(&self, x: &[T], n: usize) -> Result<BatchTrace<T>, ModelError> {
        if x.len() != n * self.arch.input_len {
            return Err(ModelError::Shape {
                what: "descriptor batch",
                expected: n * self.arch.input_len,
                actual: x.len(),
            });
        }
        let a = &self.arch;
        let w = a.width;
        let p = &self.params;

        let mut z0 = vec![T::ZERO; n * w];
        linalg::matmul_nt(x, &p[a.input_weights()], &mut z0, n, a.input_len, w, T::ZERO);
        linalg::add_row_bias(&mut z0, &p[a.input_bias()]);
        let mut h = z0.clone();
        relu_in_place(&mut h);

        let mut hs = Vec::with_capacity(a.blocks + 1);
        let mut pre = Vec::with_capacity(a.blocks);
        let mut acts = Vec::with_capacity(a.blocks);
        for b in 0..a.blocks {
            let r = a.block(b);
            let mut pa = vec![T::ZERO; n * w];
            linalg::matmul_nt(&h, &p[r.w1], &mut pa, n, w, w, T::ZERO);
            linalg::add_row_bias(&mut pa, &p[r.b1]);
            let mut act = pa.clone();
            relu_in_place(&mut act);
            let mut next = h.clone();
            linalg::matmul_nt(&act, &p[r.w2], &mut next, n, w, w, T::ONE);
            linalg::add_row_bias(&mut next, &p[r.b2]);
            hs.push(h);
            pre.push(pa);
            acts.push(act);
            h = next;
        }
        let mut out = vec![T::ZERO; n * 3];
        linalg::matmul_nt(&h, &p[a.head_weights()], &mut out, n, w, 3, T::ZERO);
        linalg::add_row_bias(&mut out, &p[a.head_bias()]);
        hs.push(h);
        Ok(BatchTrace {
            n,
            z0,
            hidden: hs,
            pre,
            acts,
            out,
        })
    }

    /// Reverse-mode pass: gradients of a loss w.r.t. every parameter given
    /// the loss gradient `d_out` (`n x 3`) at the outputs of `trace`.
    pub fn backward(&self, x: &[T], trace: &BatchTrace<T>, d_out: &[T]) -> Vec<T> {
        let a = &self.arch;
        let w = a.width;
        let n = trace.n;
        let p = &self.params;
        assert_eq!(d_out.len(), n * 3);
        assert_eq!(x.len(), n * a.input_len);
        let mut g = vec![T::ZERO; self.params.len()];

        let last = &trace.hidden[a.blocks];
        linalg::matmul_tn(d_out, last, &mut g[a.head_weights()], 3, n, w, T::ZERO);
        linalg::add_column_sums(d_out, &mut g[a.head_bias()]);
        let mut dh = vec![T::ZERO; n * w];
        linalg::matmul_nn(d_out, &p[a.head_weights()], &mut dh, n, 3, w, T::ZERO);

        let mut dact = vec![T::ZERO; n * w];
        for b in (0..a.blocks).rev() {
            let r = a.block(b);
            // h_out = h_in + W2 relu(W1 h_in + b1) + b2
            linalg::matmul_tn(&dh, &trace.acts[b], &mut g[r.w2.clone()], w, n, w, T::ZERO);
            linalg::add_column_sums(&dh, &mut g[r.b2.clone()]);
            linalg::matmul_nn(&dh, &p[r.w2], &mut dact, n, w, w, T::ZERO);
            relu_backward_in_place(&mut dact, &trace.pre[b]);
            linalg::matmul_tn(&dact, &trace.hidden[b], &mut g[r.w1.clone()], w, n, w, T::ZERO);
            linalg::add_column_sums(&dact, &mut g[r.b1.clone()]);
            // skip path keeps dh; add the branch contribution
            linalg::matmul_nn(&dact, &p[r.w1], &mut dh, n, w, w, T::ONE);
        }

        relu_backward_in_place(&mut dh, &trace.z0);
        linalg::matmul_tn(&dh, x, &mut g[a.input_weights()], w, n, a.input_len, T::ZERO);
        linalg::add_column_sums(&dh, &mut g[a.input_bias()]);
        g
    }

    /// Batch logMSE and its exact gradient w.r.t. all parameters.
    ///
    /// `descriptors` is `n x input_len` row-major, `targets` is `n x 3`.
    pub fn loss_and_gradient(
        &self,
        descriptors: &[f32],
        targets: &[f64],
        loss_epsilon: f64,
    ) -> Result<(f64, Vec<T>), ModelError> {
        let n = targets.len() / 3;
        if n == 0 || targets.len() != n * 3 {
            return Err(ModelError::Shape {
                what: "target batch",
                expected: 3 * n.max(1),
                actual: targets.len(),
            });
        }
        let x: Vec<T> = descriptors.iter().map(|&v| T::from_f32(v)).collect();
        let trace = self.forward_batch(&x, n)?;
        let pred: Vec<f64> = trace.out.iter().map(|v| v.to_f64()).collect();
        let (loss, d_pred) = crate::training::logmse_with_gradient(&pred, targets, loss_epsilon);
        let d_out: Vec<T> = d_pred.into_iter().map(T::from_f64).collect();
        Ok((loss, self.backward(&x, &trace, &d_out)))
    }
}

impl Network<f32> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.layout_hash.to_le_bytes());
        out.push(self.output_mode.code());
        for d in [self.arch.input_len, self.arch.width, self.arch.blocks] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for w in &self.params {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        if bytes.len() < HEADER_LEN {
            return Err(ModelError::Format(format!(
                "{} bytes is shorter than the {HEADER_LEN}-byte header",
                bytes.len()
            )));
        }
        if &bytes[0..4] != MAGIC {
            return Err(ModelError::Format(format!("bad magic {:?}", &bytes[0..4])));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != FORMAT_VERSION {
            return Err(ModelError::Version(version));
        }
        let layout_hash = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let output_mode = OutputMode::from_code(bytes[16])
            .ok_or_else(|| ModelError::Format(format!("unknown output mode {}", bytes[16])))?;
        let arch = Architecture::new(u32_at(17) as usize, u32_at(21) as usize, u32_at(25) as usize);
        let payload = &bytes[HEADER_LEN..];
        let expected = arch.param_count() * 4;
        if payload.len() != expected {
            return Err(ModelError::Shape {
                what: "weight payload (bytes)",
                expected,
                actual: payload.len(),
            });
        }
        let params = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self {
            arch,
            layout_hash,
            output_mode,
            params,
        })
    }
}

pub fn save_params(params: &RegressorParams, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let path = path.as_ref();
    fs::write(path, params.to_bytes()).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_params(path: impl AsRef<Path>) -> Result<RegressorParams, ModelError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    RegressorParams::from_bytes(&bytes)
}

/// Loads a model and checks it against the layout and output mode in use.
pub fn load_params_for(
    path: impl AsRef<Path>,
    layout: &DescriptorLayout,
    mode: OutputMode,
) -> Result<RegressorParams, ModelError> {
    let params = load_params(path)?;
    params.check_layout(layout)?;
    params.check_mode(mode)?;
    Ok(params)
}

/// Buffers for [`Network::forward_with`].
#[derive(Debug, Clone, Default)]
pub struct Scratch<T> {
    x: Vec<T>,
    h: Vec<T>,
    t: Vec<T>,
    u: Vec<T>,
}

impl<T: Real> Scratch<T> {
    pub fn new(arch: &Architecture) -> Self {
        let mut s = Self {
            x: Vec::new(),
            h: Vec::new(),
            t: Vec::new(),
            u: Vec::new(),
        };
        s.resize(arch);
        s
    }

    fn resize(&mut self, arch: &Architecture) {
        self.x.resize(arch.input_len, T::ZERO);
        self.h.resize(arch.width, T::ZERO);
        self.t.resize(arch.width, T::ZERO);
        self.u.resize(arch.width, T::ZERO);
    }
}

/// Cached activations of a batched forward pass.
#[derive(Debug, Clone)]
pub struct BatchTrace<T> {
    pub n: usize,
    /// Input projection pre-activation, `n x width`.
    pub z0: Vec<T>,
    /// Block inputs; the last entry is the head input.
    pub hidden: Vec<Vec<T>>,
    /// `W1 h + b1` per block.
    pub pre: Vec<Vec<T>>,
    /// `relu(W1 h + b1)` per block.
    pub acts: Vec<Vec<T>>,
    /// Outputs, `n x 3`.
    pub out: Vec<T>,
}

fn relu_in_place<T: Real>(v: &mut [T]) {
    for x in v {
        if !(*x > T::ZERO) {
            *x = T::ZERO;
        }
    }
}

fn relu_backward_in_place<T: Real>(grad: &mut [T], pre: &[T]) {
    for (g, &z) in grad.iter_mut().zip(pre) {
        if !(z > T::ZERO) {
            *g = T::ZERO;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: Architecture = Architecture::new(11, 6, 2);

    #[test]
    fn default_parameter_count() {
        let arch = Architecture::for_layout(&DescriptorLayout::default_layout());
        assert_eq!(arch.input_len, 7290);
        assert_eq!(
            arch.param_count(),
            240 * 7290 + 240 + 8 * (2 * (240 * 240 + 240)) + 3 * 240 + 3
        );
        assert_eq!(arch.param_count(), 2_676_003);
        assert_eq!(arch.head_bias().end, arch.param_count());
    }

    #[test]
    fn ranges_tile_the_parameter_vector() {
        let a = TINY;
        let mut ranges = vec![a.input_weights(), a.input_bias()];
        for b in 0..a.blocks {
            let r = a.block(b);
            ranges.extend([r.w1, r.b1, r.w2, r.b2]);
        }
        ranges.extend([a.head_weights(), a.head_bias()]);
        let mut next = 0;
        for r in ranges {
            assert_eq!(r.start, next);
            next = r.end;
        }
        assert_eq!(next, a.param_count());
    }

    #[test]
    fn init_is_deterministic_with_zero_head() {
        let a: RegressorParams = Network::init(TINY, 7, OutputMode::AtlasCoord, 42);
        let b: RegressorParams = Network::init(TINY, 7, OutputMode::AtlasCoord, 42);
        assert_eq!(a.to_bytes(), b.to_bytes());
        assert!(a.params()[TINY.head_weights()].iter().all(|&w| w == 0.0));
        assert!(a.params()[TINY.input_bias()].iter().all(|&w| w == 0.0));
        let limit = (6.0f64 / 11.0).sqrt() as f32;
        assert!(a.params()[TINY.input_weights()].iter().all(|w| w.abs() <= limit));
        assert_ne!(a.params(), Network::<f32>::init(TINY, 7, OutputMode::AtlasCoord, 43).params());
        assert_eq!(a.forward(&[0.3; 11]).unwrap(), [0.0; 3]);
    }

    #[test]
    fn shape_errors_name_expected_and_actual() {
        let net: RegressorParams = Network::init(TINY, 0, OutputMode::AtlasCoord, 1);
        match net.forward(&[0.0; 10]) {
            Err(ModelError::Shape { expected, actual, .. }) => assert_eq!((expected, actual), (11, 10)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn batch_and_single_forward_agree() {
        let net: Network<f64> = Network::init_with(TINY, 0, OutputMode::AtlasCoord, 5, HeadInit::HeUniform);
        let x: Vec<f32> = (0..33).map(|i| ((i * 37) % 17) as f32 / 17.0).collect();
        let xt: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        let trace = net.forward_batch(&xt, 3).unwrap();
        for s in 0..3 {
            let single = net.forward(&x[s * 11..(s + 1) * 11]).unwrap();
            for o in 0..3 {
                assert!((single[o] - trace.out[s * 3 + o]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zeroed_blocks_reduce_to_projection_and_head() {
        let mut net: Network<f64> =
            Network::init_with(TINY, 0, OutputMode::AtlasCoord, 9, HeadInit::HeUniform);
        for b in 0..TINY.blocks {
            let r = TINY.block(b);
            for range in [r.w1, r.b1, r.w2, r.b2] {
                net.params_mut()[range].fill(0.0);
            }
        }
        let d: Vec<f32> = (0..11).map(|i| i as f32 / 11.0).collect();
        let got = net.forward(&d).unwrap();
        let p = net.params();
        let mut h = [0.0; 6];
        for r in 0..6 {
            let z: f64 = (0..11).map(|c| p[r * 11 + c] * d[c] as f64).sum::<f64>() + p[66 + r];
            h[r] = z.max(0.0);
        }
        let hw = &p[TINY.head_weights()];
        let hb = &p[TINY.head_bias()];
        for o in 0..3 {
            let want: f64 = (0..6).map(|c| hw[o * 6 + c] * h[c]).sum::<f64>() + hb[o];
            assert!((got[o] - want).abs() < 1e-12, "{} vs {}", got[o], want);
        }
    }

    #[test]
    fn file_round_trip_and_errors() {
        let net: RegressorParams =
            Network::init_with(TINY, 0xdead_beef, OutputMode::DisplacementMm, 3, HeadInit::HeUniform);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bgps");
        save_params(&net, &path).unwrap();
        let back = load_params(&path).unwrap();
        assert_eq!(back, net);
        assert_eq!(back.to_bytes(), net.to_bytes());

        let mut bytes = net.to_bytes();
        bytes[0] = b'X';
        assert!(matches!(RegressorParams::from_bytes(&bytes), Err(ModelError::Format(_))));
        let mut bytes = net.to_bytes();
        bytes[4] = 2;
        assert!(matches!(RegressorParams::from_bytes(&bytes), Err(ModelError::Version(2))));
        let bytes = net.to_bytes();
        assert!(matches!(
            RegressorParams::from_bytes(&bytes[..bytes.len() - 1]),
            Err(ModelError::Shape { .. })
        ));

        let layout = DescriptorLayout::default_layout();
        assert!(matches!(
            load_params_for(&path, &layout, OutputMode::DisplacementMm),
            Err(ModelError::IncompatibleLayout { found: 0xdead_beef, .. })
        ));
    }

    #[test]
    fn mode_check() {
        let net: RegressorParams = Network::init(TINY, 0, OutputMode::AtlasCoord, 1);
        assert!(net.check_mode(OutputMode::AtlasCoord).is_ok());
        assert!(matches!(
            net.check_mode(OutputMode::DisplacementMm),
            Err(ModelError::WrongMode { .. })
        ));
    }
}
