use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::ctsim::DatasetConfig;
use crate::error::{Error, Result};
use crate::train::TrainConfig;

/// Optional default locations, used when the matching flag is absent.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunPaths {
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
}

/// Everything a command needs: training settings, simulator settings and
/// paths, resolved from a named preset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: String,
    pub train: TrainConfig,
    pub data: DatasetConfig,
    #[serde(default)]
    pub paths: RunPaths,
}

impl RunConfig {
    /// The preset with default simulator settings (64x64 phantoms).
    pub fn preset(name: &str) -> Result<Self> {
        Ok(RunConfig {
            preset: name.to_string(),
            train: TrainConfig::preset(name)?,
            data: DatasetConfig::default(),
            paths: RunPaths::default(),
        })
    }

    /// Builds a config in three layers: the preset (from `preset`, else the
    /// document's `"preset"` key, else `desk`), then the keys of `doc`,
    /// then `KEY=VALUE` overrides with dotted keys. Unknown keys anywhere
    /// are rejected, and the result is validated.
    pub fn resolve(doc: Option<&Value>, preset: Option<&str>, overrides: &[String]) -> Result<Self> {
        if let Some(d) = doc {
            if !d.is_object() {
                return Err(Error::Config("run config must be a JSON object".into()));
            }
        }
        let from_doc = doc.and_then(|d| d.get("preset")).and_then(Value::as_str);
        let name = preset.or(from_doc).unwrap_or("desk");
        let mut value = serde_json::to_value(RunConfig::preset(name)?)?;
        if let Some(d) = doc {
            merge(&mut value, d);
        }
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        value["preset"] = Value::String(name.to_string());
        let cfg: RunConfig =
            serde_json::from_value(value).map_err(|e| Error::Config(format!("run config: {e}")))?;
        cfg.train.validate()?;
        cfg.data.validate()?;
        Ok(cfg)
    }

    /// Reads an optional JSON file and resolves it.
    pub fn load(path: Option<&Path>, preset: Option<&str>, overrides: &[String]) -> Result<Self> {
        let doc = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(Error::at_path(p))?;
                Some(serde_json::from_str::<Value>(&text)?)
            }
            None => None,
        };
        Self::resolve(doc.as_ref(), preset, overrides)
    }
}

fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, p) => *b = p.clone(),
    }
}

/// `a.b.c=value`; the value is parsed as JSON, or taken as a string.
fn apply_override(root: &mut Value, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {item:?} is not KEY=VALUE")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?}: {part:?} is not inside an object")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}
