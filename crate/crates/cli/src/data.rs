//! Reading synthetic datasets written by `synth-gen`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use bodygps::synth::{DatasetManifest, Split, SubjectSample};
use bodygps::Atlas;

use crate::common::{self, require_file};

pub struct Dataset {
    pub atlas: Arc<Atlas>,
    pub train: Vec<SubjectSample>,
    pub test: Vec<SubjectSample>,
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    base.join(rel)
}

/// Loads the manifest, its atlas bundle and every subject volume. All paths
/// are checked before any volume is read.
pub fn load(manifest_path: &Path) -> anyhow::Result<Dataset> {
    let manifest: DatasetManifest = common::read_json(manifest_path, "dataset manifest")?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let atlas_dir = resolve(base, &manifest.atlas);
    common::require_dir(&atlas_dir, "atlas bundle")?;
    for rec in &manifest.subjects {
        require_file(&resolve(base, &rec.path), "subject volume")?;
    }

    let atlas = Arc::new(common::load_atlas(&atlas_dir)?);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for rec in &manifest.subjects {
        let volume = common::load_volume(&resolve(base, &rec.path))?;
        let sample = SubjectSample {
            id: rec.id.clone(),
            volume,
            field: rec.field.clone(),
        };
        match rec.split {
            Split::Train => train.push(sample),
            Split::Test => test.push(sample),
        }
    }
    Ok(Dataset {
        atlas,
        train,
        test,
    })
}
