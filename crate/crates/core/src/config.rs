//! Run configuration: a preset, then a TOML file, then `key=value` overrides,
//! merged and validated before any compute starts.
//!
//! ```toml
//! output_dir = "runs/shd"
//! seed = 3
//! manifest = "data/shd.manifest"
//!
//! [network]
//! hidden = [128, 128]
//! learn_delays = true
//!
//! [train]
//! epochs = 100
//! lr_weights = 0.01
//! ```
//!
//! Overrides use dotted paths, e.g. `train.epochs=5` or `network.neuron="lif"`.
//! Values parse as TOML and fall back to plain strings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::io;
use crate::network::NetworkConfig;
use crate::training::{Preset, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    /// Master seed; overrides `train.seed` when set.
    pub seed: Option<u64>,
    pub manifest: Option<PathBuf>,
    pub network: NetworkConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::from_preset(Preset::Shd)
    }
}

fn merge(base: &mut Table, top: Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn parse_override(item: &str) -> Result<(Vec<String>, Value)> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {item:?} is not key=value")))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
    if path.iter().any(String::is_empty) {
        return Err(Error::Config(format!("bad override key {key:?}")));
    }
    let raw = raw.trim();
    let value = toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    Ok((path, value))
}

fn set_path(table: &mut Table, path: &[String], value: Value) -> Result<()> {
    let (last, parents) = path.split_last().unwrap();
    let mut cur = table;
    for p in parents {
        let entry = cur.entry(p.clone()).or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override path crosses non-table key {p:?}")))?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}

impl RunConfig {
    pub fn from_preset(p: Preset) -> Self {
        RunConfig {
            output_dir: PathBuf::from("runs"),
            seed: None,
            manifest: None,
            network: p.network(),
            train: p.train(),
        }
    }

    /// Merge layers and validate. `file` is TOML text (with its path for
    /// resolving a relative manifest).
    pub fn resolve(preset: Preset, file: Option<(&str, &Path)>, overrides: &[String]) -> Result<Self> {
        let mut table = Table::try_from(RunConfig::from_preset(preset))
            .map_err(|e| Error::Config(format!("preset: {e}")))?;
        let mut manifest_base = None;
        if let Some((text, path)) = file {
            let t: Table = toml::from_str(text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            if t.contains_key("manifest") {
                manifest_base = path.parent().map(Path::to_path_buf);
            }
            merge(&mut table, t);
        }
        for item in overrides {
            let (path, value) = parse_override(item)?;
            if path == ["manifest"] {
                manifest_base = None;
            }
            set_path(&mut table, &path, value)?;
        }
        let mut cfg: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        if let (Some(base), Some(m)) = (manifest_base, cfg.manifest.as_mut()) {
            if m.is_relative() {
                *m = base.join(&*m);
            }
        }
        if let Some(s) = cfg.seed {
            cfg.train.seed = s;
        }
        cfg.network.validate()?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn load(preset: Preset, path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        match path {
            Some(p) => {
                let text = io::read_to_string(p)?;
                Self::resolve(preset, Some((&text, p)), overrides)
            }
            None => Self::resolve(preset, None, overrides),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}
