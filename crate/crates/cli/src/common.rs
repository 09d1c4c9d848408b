use std::fs;
use std::path::Path;

use anyhow::Context;
use bodygps::model::{self, ModelError};
use bodygps::{metaimage, Atlas, DescriptorLayout, IntensityWindow, OutputMode, RegressorParams, Volume, WorldPoint};
use serde::Serialize;

/// Marks an error as a configuration problem (exit status 2).
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

pub fn require_file(path: &Path, what: &str) -> anyhow::Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(config_error(format!("{what} `{}` does not exist or is not a file", path.display())))
    }
}

pub fn require_dir(path: &Path, what: &str) -> anyhow::Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(config_error(format!("{what} `{}` does not exist or is not a directory", path.display())))
    }
}

/// Parses `x,y,z` in millimetres.
pub fn parse_point(s: &str) -> Result<WorldPoint, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected `x,y,z`, got `{s}`"));
    }
    let mut v = [0.0; 3];
    for (dst, part) in v.iter_mut().zip(&parts) {
        *dst = part.parse().map_err(|_| format!("`{part}` is not a number"))?;
    }
    let p = WorldPoint::from(v);
    if p.is_finite() {
        Ok(p)
    } else {
        Err(format!("point `{s}` is not finite"))
    }
}

/// Parses `lo,hi` into an intensity window.
pub fn parse_window(s: &str) -> Result<IntensityWindow, String> {
    let (lo, hi) = s.split_once(',').ok_or_else(|| format!("expected `lo,hi`, got `{s}`"))?;
    let lo: f32 = lo.trim().parse().map_err(|_| format!("`{lo}` is not a number"))?;
    let hi: f32 = hi.trim().parse().map_err(|_| format!("`{hi}` is not a number"))?;
    IntensityWindow::new(lo, hi).map_err(|e| e.to_string())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> anyhow::Result<T> {
    require_file(path, what)?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text)
        .map_err(|e| config_error(format!("{what} `{}` is invalid: {e}", path.display())))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn create_dir(path: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

pub fn load_volume(path: &Path) -> anyhow::Result<Volume> {
    require_file(path, "volume")?;
    metaimage::load_volume(path).with_context(|| format!("loading volume {}", path.display()))
}

pub fn load_atlas(dir: &Path) -> anyhow::Result<Atlas> {
    require_dir(dir, "atlas bundle")?;
    Atlas::load(dir).map_err(|e| config_error(format!("atlas bundle `{}`: {e}", dir.display())))
}

/// Loads a model file; a missing, malformed or incompatible file is a
/// configuration error.
pub fn load_model(path: &Path, layout: &DescriptorLayout, mode: OutputMode) -> anyhow::Result<RegressorParams> {
    require_file(path, "model")?;
    model::load_params_for(path, layout, mode).map_err(|e| match e {
        ModelError::Io { .. } => anyhow::Error::new(e),
        other => config_error(format!("model `{}`: {other}", path.display())),
    })
}
