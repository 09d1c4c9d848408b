//! Windowed 8-bit slice rendering.

use std::str::FromStr;

use bodygps::Volume;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SliceError {
    #[error("unknown axis `{0}` (expected x, y or z)")]
    BadAxis(String),
    #[error("slice index {index} out of range for axis {axis} with {len} slices")]
    IndexOutOfRange { axis: char, index: usize, len: usize },
    #[error("png encoding failed: {0}")]
    Encode(#[from] png::EncodingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SliceAxis {
    X,
    Y,
    Z,
}

impl SliceAxis {
    fn index(self) -> usize {
        match self {
            SliceAxis::X => 0,
            SliceAxis::Y => 1,
            SliceAxis::Z => 2,
        }
    }

    fn name(self) -> char {
        ['x', 'y', 'z'][self.index()]
    }
}

impl FromStr for SliceAxis {
    type Err = SliceError;

    fn from_str(s: &str) -> Result<Self, SliceError> {
        match s {
            "x" | "X" => Ok(SliceAxis::X),
            "y" | "Y" => Ok(SliceAxis::Y),
            "z" | "Z" => Ok(SliceAxis::Z),
            other => Err(SliceError::BadAxis(other.to_string())),
        }
    }
}

/// Grayscale pixels of one slice, row-major.
///
/// Columns run along the faster remaining axis and rows along the slower
/// one: `z` slices are `dims.x` wide and `dims.y` tall, `y` slices are
/// `dims.x` by `dims.z`, `x` slices are `dims.y` by `dims.z`.
pub fn slice_pixels(
    volume: &Volume,
    axis: SliceAxis,
    index: usize,
    (lo, hi): (f32, f32),
) -> Result<(u32, u32, Vec<u8>), SliceError> {
    let dims = volume.geometry().dims;
    let a = axis.index();
    if index >= dims[a] {
        return Err(SliceError::IndexOutOfRange {
            axis: axis.name(),
            index,
            len: dims[a],
        });
    }
    let (cols, rows) = match axis {
        SliceAxis::X => (1, 2),
        SliceAxis::Y => (0, 2),
        SliceAxis::Z => (0, 1),
    };
    let (w, h) = (dims[cols], dims[rows]);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut pixels = Vec::with_capacity(w * h);
    for r in 0..h {
        for c in 0..w {
            let mut ijk = [0usize; 3];
            ijk[a] = index;
            ijk[cols] = c;
            ijk[rows] = r;
            let v = volume.get(ijk[0], ijk[1], ijk[2]);
            let t = ((v - lo) / span).clamp(0.0, 1.0);
            pixels.push((t * 255.0).round() as u8);
        }
    }
    Ok((w as u32, h as u32, pixels))
}

/// PNG-encoded [`slice_pixels`]; output bytes depend only on the inputs.
pub fn render_slice(volume: &Volume, axis: SliceAxis, index: usize, window: (f32, f32)) -> Result<Vec<u8>, SliceError> {
    let (w, h, pixels) = slice_pixels(volume, axis, index, window)?;
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, w, h);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        enc.set_compression(png::Compression::Default);
        let mut writer = enc.write_header()?;
        writer.write_image_data(&pixels)?;
        writer.finish()?;
    }
    Ok(out)
}
