//! MetaImage (`.mha` / `.mhd` + raw) reader and writer.
//!
//! Supported subset: 3D, axis-aligned, uncompressed little-endian payloads of
//! `MET_SHORT`, `MET_UCHAR` or `MET_FLOAT`, x-fastest.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use log::warn;
use thiserror::Error;

use crate::volume::{Geometry, LabelVolume, Volume, VolumeError};

#[derive(Debug, Error)]
pub enum MetaImageError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed header key `{key}`: {reason}")]
    Parse { key: String, reason: String },
    #[error("unsupported element type `{0}` (expected MET_SHORT, MET_UCHAR or MET_FLOAT)")]
    UnsupportedType(String),
    #[error("unsupported MetaImage feature: {0}")]
    Unsupported(String),
    #[error("truncated or oversized payload: header requires {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("voxel value {value} at index {index} cannot be stored as {element}")]
    NotRepresentable {
        index: usize,
        value: f32,
        element: &'static str,
    },
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

pub type Result<T> = std::result::Result<T, MetaImageError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementType {
    Short,
    UChar,
    Float,
}

impl ElementType {
    pub fn tag(self) -> &'static str {
        match self {
            ElementType::Short => "MET_SHORT",
            ElementType::UChar => "MET_UCHAR",
            ElementType::Float => "MET_FLOAT",
        }
    }

    fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "MET_SHORT" => Ok(ElementType::Short),
            "MET_UCHAR" => Ok(ElementType::UChar),
            "MET_FLOAT" => Ok(ElementType::Float),
            other => Err(MetaImageError::UnsupportedType(other.to_string())),
        }
    }

    pub fn size(self) -> usize {
        match self {
            ElementType::Short => 2,
            ElementType::UChar => 1,
            ElementType::Float => 4,
        }
    }
}

/// Voxel payload in its on-disk element type.
#[derive(Debug, Clone, PartialEq)]
pub enum VoxelData {
    Short(Vec<i16>),
    UChar(Vec<u8>),
    Float(Vec<f32>),
}

impl VoxelData {
    pub fn element_type(&self) -> ElementType {
        match self {
            VoxelData::Short(_) => ElementType::Short,
            VoxelData::UChar(_) => ElementType::UChar,
            VoxelData::Float(_) => ElementType::Float,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            VoxelData::Short(v) => v.len(),
            VoxelData::UChar(v) => v.len(),
            VoxelData::Float(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_f32(&self) -> Vec<f32> {
        match self {
            VoxelData::Short(v) => v.iter().map(|&x| x as f32).collect(),
            VoxelData::UChar(v) => v.iter().map(|&x| x as f32).collect(),
            VoxelData::Float(v) => v.clone(),
        }
    }

    /// Converts intensities to `element`, refusing values that would not
    /// survive the round trip.
    pub fn from_f32(values: &[f32], element: ElementType) -> Result<Self> {
        let check = |index: usize, value: f32, lo: f32, hi: f32| {
            if value.fract() == 0.0 && value >= lo && value <= hi {
                Ok(())
            } else {
                Err(MetaImageError::NotRepresentable {
                    index,
                    value,
                    element: element.tag(),
                })
            }
        };
        Ok(match element {
            ElementType::Float => VoxelData::Float(values.to_vec()),
            ElementType::Short => VoxelData::Short(
                values
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| check(i, v, i16::MIN as f32, i16::MAX as f32).map(|_| v as i16))
                    .collect::<Result<_>>()?,
            ),
            ElementType::UChar => VoxelData::UChar(
                values
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| check(i, v, 0.0, 255.0).map(|_| v as u8))
                    .collect::<Result<_>>()?,
            ),
        })
    }

    fn decode(element: ElementType, bytes: &[u8]) -> Self {
        match element {
            ElementType::UChar => VoxelData::UChar(bytes.to_vec()),
            ElementType::Short => VoxelData::Short(
                bytes
                    .chunks_exact(2)
                    .map(|c| i16::from_le_bytes([c[0], c[1]]))
                    .collect(),
            ),
            ElementType::Float => VoxelData::Float(
                bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            ),
        }
    }

    fn encode(&self) -> Vec<u8> {
        match self {
            VoxelData::UChar(v) => v.clone(),
            VoxelData::Short(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            VoxelData::Float(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaImage {
    pub geometry: Geometry,
    pub data: VoxelData,
}

impl MetaImage {
    pub fn into_volume(self) -> Result<Volume> {
        Ok(Volume::new(self.geometry, self.data.to_f32())?)
    }

    pub fn into_label_volume(self) -> Result<LabelVolume> {
        match self.data {
            VoxelData::UChar(v) => Ok(LabelVolume::new(self.geometry, v)?),
            other => {
                let v = Volume::new(self.geometry, other.to_f32())?;
                Ok(LabelVolume::try_from_volume(&v)?)
            }
        }
    }
}

struct Header {
    geometry: Geometry,
    element: ElementType,
    data_file: String,
}

const IGNORED_KEYS: &[&str] = &[
    "BinaryData",
    "CenterOfRotation",
    "AnatomicalOrientation",
    "Comment",
    "ObjectSubType",
    "Name",
];

fn parse_err(key: &str, reason: impl Into<String>) -> MetaImageError {
    MetaImageError::Parse {
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn parse_reals<const N: usize>(key: &str, value: &str) -> Result<[f64; N]> {
    let parts: Vec<&str> = value.split_whitespace().collect();
    if parts.len() != N {
        return Err(parse_err(key, format!("expected {N} values, found `{value}`")));
    }
    let mut out = [0.0; N];
    for (o, p) in out.iter_mut().zip(&parts) {
        *o = p
            .parse::<f64>()
            .map_err(|e| parse_err(key, format!("`{p}`: {e}")))?;
    }
    Ok(out)
}

/// Parses header lines up to and including `ElementDataFile`; returns the
/// header and the byte offset where the payload starts.
fn parse_header(bytes: &[u8]) -> Result<(Header, usize)> {
    let mut pos = 0;
    let mut object_type = None;
    let mut ndims = None;
    let mut dims = None;
    let mut spacing = None;
    let mut origin = None;
    let mut element = None;
    let mut data_file = None;

    while pos < bytes.len() {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .map_or(bytes.len(), |e| pos + e);
        let raw = &bytes[pos..end];
        pos = (end + 1).min(bytes.len());
        let line = std::str::from_utf8(raw)
            .map_err(|_| parse_err("<header>", "header line is not valid UTF-8"))?
            .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| parse_err(line, "expected `Key = Value`"))?;
        match key {
            "ObjectType" => object_type = Some(value.to_string()),
            "NDims" => {
                let n: usize = value
                    .parse()
                    .map_err(|e| parse_err(key, format!("`{value}`: {e}")))?;
                if n != 3 {
                    return Err(parse_err(key, format!("only 3D images are supported, got {n}")));
                }
                ndims = Some(n);
            }
            "DimSize" => {
                let d = parse_reals::<3>(key, value)?;
                if d.iter().any(|&x| x < 1.0 || x.fract() != 0.0) {
                    return Err(parse_err(key, format!("dimensions must be positive integers, got `{value}`")));
                }
                dims = Some(d.map(|x| x as usize));
            }
            "ElementSpacing" | "ElementSize" => spacing = Some(parse_reals::<3>(key, value)?),
            "Offset" | "Origin" | "Position" => origin = Some(parse_reals::<3>(key, value)?),
            "ElementType" => element = Some(ElementType::from_tag(value)?),
            "BinaryDataByteOrderMSB" | "ElementByteOrderMSB" => {
                if value.eq_ignore_ascii_case("true") {
                    return Err(MetaImageError::Unsupported("big-endian payloads".into()));
                }
            }
            "CompressedData" => {
                if value.eq_ignore_ascii_case("true") {
                    return Err(MetaImageError::Unsupported("compressed payloads".into()));
                }
            }
            "ElementNumberOfChannels" => {
                if value != "1" {
                    return Err(MetaImageError::Unsupported(format!("{value} channels per voxel")));
                }
            }
            "TransformMatrix" | "Rotation" | "Orientation" => {
                let m = parse_reals::<9>(key, value)?;
                if m != [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0] {
                    return Err(MetaImageError::Unsupported(format!("oblique orientation `{value}`")));
                }
            }
            "ElementDataFile" => {
                data_file = Some(value.to_string());
                break;
            }
            k if IGNORED_KEYS.contains(&k) => {}
            other => warn!("ignoring unknown MetaImage key `{other}`"),
        }
    }

    match object_type.as_deref() {
        Some("Image") => {}
        Some(other) => return Err(parse_err("ObjectType", format!("expected `Image`, got `{other}`"))),
        None => return Err(parse_err("ObjectType", "missing")),
    }
    ndims.ok_or_else(|| parse_err("NDims", "missing"))?;
    let dims = dims.ok_or_else(|| parse_err("DimSize", "missing"))?;
    let spacing = spacing.ok_or_else(|| parse_err("ElementSpacing", "missing"))?;
    let origin = origin.unwrap_or([0.0; 3]);
    let element = element.ok_or_else(|| parse_err("ElementType", "missing"))?;
    let data_file = data_file.ok_or_else(|| parse_err("ElementDataFile", "missing"))?;
    let geometry = Geometry::new(dims, spacing, origin)?;
    Ok((
        Header {
            geometry,
            element,
            data_file,
        },
        pos,
    ))
}

fn decode_payload(header: &Header, payload: &[u8]) -> Result<MetaImage> {
    let expected = header.geometry.len() * header.element.size();
    if payload.len() != expected {
        return Err(MetaImageError::Truncated {
            expected,
            actual: payload.len(),
        });
    }
    Ok(MetaImage {
        geometry: header.geometry,
        data: VoxelData::decode(header.element, payload),
    })
}

/// Parses a single-file `.mha` image held in memory.
pub fn parse_mha(bytes: &[u8]) -> Result<MetaImage> {
    let (header, start) = parse_header(bytes)?;
    if header.data_file != "LOCAL" {
        return Err(MetaImageError::Unsupported(format!(
            "in-memory image references external data file `{}`",
            header.data_file
        )));
    }
    decode_payload(&header, &bytes[start..])
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> MetaImageError + '_ {
    move |source| MetaImageError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read(path: impl AsRef<Path>) -> Result<MetaImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    let (header, start) = parse_header(&bytes)?;
    if header.data_file == "LOCAL" {
        return decode_payload(&header, &bytes[start..]);
    }
    let raw_path = path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&header.data_file);
    let payload = fs::read(&raw_path).map_err(io_err(&raw_path))?;
    decode_payload(&header, &payload)
}

fn header_text(geometry: &Geometry, element: ElementType, data_file: &str) -> String {
    let g = geometry;
    format!(
        "ObjectType = Image\n\
         NDims = 3\n\
         BinaryData = True\n\
         BinaryDataByteOrderMSB = False\n\
         CompressedData = False\n\
         TransformMatrix = 1 0 0 0 1 0 0 0 1\n\
         Offset = {} {} {}\n\
         ElementSpacing = {} {} {}\n\
         DimSize = {} {} {}\n\
         ElementType = {}\n\
         ElementDataFile = {}\n",
        g.origin[0],
        g.origin[1],
        g.origin[2],
        g.spacing[0],
        g.spacing[1],
        g.spacing[2],
        g.dims[0],
        g.dims[1],
        g.dims[2],
        element.tag(),
        data_file
    )
}

/// Serializes to single-file `.mha` bytes.
pub fn to_mha_bytes(image: &MetaImage) -> Vec<u8> {
    let mut out = header_text(&image.geometry, image.data.element_type(), "LOCAL").into_bytes();
    out.extend(image.data.encode());
    out
}

/// Writes `.mha` (embedded payload) or `.mhd` plus a sibling `.raw` file,
/// chosen by extension.
pub fn write(path: impl AsRef<Path>, image: &MetaImage) -> Result<()> {
    let path = path.as_ref();
    if image.data.len() != image.geometry.len() {
        return Err(VolumeError::LengthMismatch {
            dims: image.geometry.dims,
            expected: image.geometry.len(),
            actual: image.data.len(),
        }
        .into());
    }
    let is_mhd = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("mhd"));
    if is_mhd {
        let raw_path = path.with_extension("raw");
        let raw_name = raw_path
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| MetaImageError::Unsupported(format!("raw file name for {}", path.display())))?
            .to_string();
        fs::write(&raw_path, image.data.encode()).map_err(io_err(&raw_path))?;
        fs::write(path, header_text(&image.geometry, image.data.element_type(), &raw_name))
            .map_err(io_err(path))
    } else {
        fs::write(path, to_mha_bytes(image)).map_err(io_err(path))
    }
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<Volume> {
    read(path)?.into_volume()
}

pub fn load_label_volume(path: impl AsRef<Path>) -> Result<LabelVolume> {
    read(path)?.into_label_volume()
}

/// `.mha` bytes of `volume` stored as `element`.
pub fn encode_volume(volume: &Volume, element: ElementType) -> Result<Vec<u8>> {
    let data = VoxelData::from_f32(volume.voxels(), element)?;
    Ok(to_mha_bytes(&MetaImage {
        geometry: *volume.geometry(),
        data,
    }))
}

pub fn save_volume(volume: &Volume, path: impl AsRef<Path>, element: ElementType) -> Result<()> {
    let data = VoxelData::from_f32(volume.voxels(), element)?;
    write(
        path,
        &MetaImage {
            geometry: *volume.geometry(),
            data,
        },
    )
}

pub fn save_label_volume(labels: &LabelVolume, path: impl AsRef<Path>) -> Result<()> {
    write(
        path,
        &MetaImage {
            geometry: *labels.geometry(),
            data: VoxelData::UChar(labels.voxels().to_vec()),
        },
    )
}
