//! Reference-space semantics.
//!
//! Normalized coordinates are atlas world millimeters relative to a reference
//! point (the carina for thoracic atlases), divided by an isotropic scale.
//!
//! An atlas bundle on disk is a directory holding `image.mha`, `mask.mha` and
//! `atlas.json`.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metaimage::{self, ElementType, MetaImageError};
use crate::volume::{LabelVolume, Volume, VolumeError, WorldPoint};

pub const DEFAULT_SCALE_MM: f64 = 256.0;

#[derive(Debug, Error)]
pub enum AtlasError {
    #[error("unknown landmark `{name}`; available: {}", available.join(", "))]
    MissingLandmark { name: String, available: Vec<String> },
    #[error("reference point `{name}` at {point} lies outside the atlas image")]
    ReferenceOutside { name: String, point: WorldPoint },
    #[error("scale must be positive and finite, got {0}")]
    BadScale(f64),
    #[error("atlas mask geometry differs from image: {0}")]
    Geometry(#[from] VolumeError),
    #[error("bad label key `{0}` in atlas.json (expected an integer 0..=255)")]
    BadLabelKey(String),
    #[error(transparent)]
    Image(#[from] MetaImageError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("invalid atlas.json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Position in atlas space: `(p - reference) / scale_mm`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NormalizedCoord(pub [f64; 3]);

impl NormalizedCoord {
    pub const ORIGIN: NormalizedCoord = NormalizedCoord([0.0; 3]);

    pub fn distance(&self, other: &NormalizedCoord) -> f64 {
        crate::volume::norm([
            self.0[0] - other.0[0],
            self.0[1] - other.0[1],
            self.0[2] - other.0[2],
        ])
    }
}

/// Label found at an atlas position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LabelHit {
    pub label: u8,
    pub name: String,
}

#[derive(Debug, Clone)]
pub struct Atlas {
    image: Volume,
    mask: LabelVolume,
    reference_name: String,
    reference: WorldPoint,
    scale_mm: f64,
    landmarks: BTreeMap<String, WorldPoint>,
    label_names: BTreeMap<u8, String>,
}

impl Atlas {
    /// Builds an atlas; the reference point is added to the landmark table
    /// under its own name and label 0 is named `background` unless given.
    pub fn new(
        image: Volume,
        mask: LabelVolume,
        reference_name: impl Into<String>,
        reference: WorldPoint,
        scale_mm: f64,
        mut landmarks: BTreeMap<String, WorldPoint>,
        mut label_names: BTreeMap<u8, String>,
    ) -> Result<Self, AtlasError> {
        let reference_name = reference_name.into();
        image.geometry().check_same(mask.geometry())?;
        if !(scale_mm.is_finite() && scale_mm > 0.0) {
            return Err(AtlasError::BadScale(scale_mm));
        }
        if !image.geometry().contains(reference) {
            return Err(AtlasError::ReferenceOutside {
                name: reference_name,
                point: reference,
            });
        }
        landmarks.insert(reference_name.clone(), reference);
        label_names
            .entry(0)
            .or_insert_with(|| "background".to_string());
        Ok(Self {
            image,
            mask,
            reference_name,
            reference,
            scale_mm,
            landmarks,
            label_names,
        })
    }

    pub fn image(&self) -> &Volume {
        &self.image
    }

    pub fn mask(&self) -> &LabelVolume {
        &self.mask
    }

    pub fn reference_name(&self) -> &str {
        &self.reference_name
    }

    /// The reference point (carina), world mm.
    pub fn reference(&self) -> WorldPoint {
        self.reference
    }

    pub fn scale_mm(&self) -> f64 {
        self.scale_mm
    }

    pub fn landmarks(&self) -> &BTreeMap<String, WorldPoint> {
        &self.landmarks
    }

    pub fn label_names(&self) -> &BTreeMap<u8, String> {
        &self.label_names
    }

    pub fn label_name(&self, label: u8) -> String {
        self.label_names
            .get(&label)
            .cloned()
            .unwrap_or_else(|| format!("label_{label}"))
    }

    /// Same atlas with a different normalization scale.
    pub fn with_scale(&self, scale_mm: f64) -> Result<Self, AtlasError> {
        if !(scale_mm.is_finite() && scale_mm > 0.0) {
            return Err(AtlasError::BadScale(scale_mm));
        }
        Ok(Self {
            scale_mm,
            ..self.clone()
        })
    }

    pub fn to_normalized(&self, p: WorldPoint) -> NormalizedCoord {
        let d = p - self.reference;
        NormalizedCoord(d.map(|x| x / self.scale_mm))
    }

    pub fn from_normalized(&self, c: NormalizedCoord) -> WorldPoint {
        self.reference
            .offset(c.0.map(|x| x * self.scale_mm))
    }

    /// Mask label at the atlas position of `c`; 0 outside the mask.
    pub fn label_at(&self, c: NormalizedCoord) -> LabelHit {
        let label = self.mask.label_nearest(self.from_normalized(c));
        LabelHit {
            label,
            name: self.label_name(label),
        }
    }

    pub fn landmark_normalized(&self, name: &str) -> Result<NormalizedCoord, AtlasError> {
        self.landmarks
            .get(name)
            .map(|&p| self.to_normalized(p))
            .ok_or_else(|| self.missing(name))
    }

    pub fn landmark(&self, name: &str) -> Result<WorldPoint, AtlasError> {
        self.landmarks.get(name).copied().ok_or_else(|| self.missing(name))
    }

    fn missing(&self, name: &str) -> AtlasError {
        // closest names first
        let mut available: Vec<String> = self.landmarks.keys().cloned().collect();
        available.sort_by_key(|k| (edit_distance(k, name), k.clone()));
        AtlasError::MissingLandmark {
            name: name.to_string(),
            available,
        }
    }

    pub fn manifest(&self) -> AtlasManifest {
        AtlasManifest {
            reference_point: ReferencePoint {
                name: self.reference_name.clone(),
                world_mm: self.reference,
            },
            scale_mm: self.scale_mm,
            background: Some(self.image.background()),
            landmarks: self.landmarks.clone(),
            labels: self
                .label_names
                .iter()
                .map(|(k, v)| (k.to_string(), v.clone()))
                .collect(),
        }
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), AtlasError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|source| AtlasError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let element = if self
            .image
            .voxels()
            .iter()
            .all(|v| v.fract() == 0.0 && (i16::MIN as f32..=i16::MAX as f32).contains(v))
        {
            ElementType::Short
        } else {
            ElementType::Float
        };
        metaimage::save_volume(&self.image, dir.join("image.mha"), element)?;
        metaimage::save_label_volume(&self.mask, dir.join("mask.mha"))?;
        let json_path = dir.join("atlas.json");
        let text = serde_json::to_string_pretty(&self.manifest())?;
        fs::write(&json_path, text).map_err(|source| AtlasError::Io {
            path: json_path,
            source,
        })
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, AtlasError> {
        let dir = dir.as_ref();
        let json_path = dir.join("atlas.json");
        let text = fs::read_to_string(&json_path).map_err(|source| AtlasError::Io {
            path: json_path,
            source,
        })?;
        let manifest: AtlasManifest = serde_json::from_str(&text)?;
        let mut image = metaimage::load_volume(dir.join("image.mha"))?;
        if let Some(bg) = manifest.background {
            image = Volume::with_background(*image.geometry(), image.voxels().to_vec(), bg)?;
        }
        let mask = metaimage::load_label_volume(dir.join("mask.mha"))?;
        let labels = manifest
            .labels
            .iter()
            .map(|(k, v)| {
                k.parse::<u8>()
                    .map(|id| (id, v.clone()))
                    .map_err(|_| AtlasError::BadLabelKey(k.clone()))
            })
            .collect::<Result<_, _>>()?;
        Atlas::new(
            image,
            mask,
            manifest.reference_point.name,
            manifest.reference_point.world_mm,
            manifest.scale_mm,
            manifest.landmarks,
            labels,
        )
    }
}

/// `atlas.json` contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtlasManifest {
    pub reference_point: ReferencePoint,
    #[serde(default = "default_scale")]
    pub scale_mm: f64,
    /// Out-of-bounds fill of the image; the smallest voxel value when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<f32>,
    #[serde(default)]
    pub landmarks: BTreeMap<String, WorldPoint>,
    #[serde(default)]
    pub labels: BTreeMap<String, String>,
}

fn default_scale() -> f64 {
    DEFAULT_SCALE_MM
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePoint {
    pub name: String,
    pub world_mm: WorldPoint,
}

fn edit_distance(a: &str, b: &str) -> usize {
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.chars().enumerate() {
        let mut cur = vec![i + 1; b.len() + 1];
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        prev = cur;
    }
    prev[b.len()]
}
