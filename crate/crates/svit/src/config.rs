//! Flat key-value run configuration.
//!
//! Keys are dotted paths into [`TrainConfig`] (`model.d_model`,
//! `world.canvas`, `optim.lr`, `steps`, ...). TOML files may use dotted
//! keys or tables; JSON files use a flat object of dotted keys (nested
//! objects are accepted too). Unspecified keys keep their defaults and
//! unknown keys are rejected.

use std::path::Path;

use serde_json::Value;
use svit_core::train::TrainConfig;

use crate::error::{format_err, io_err, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Toml,
    Json,
}

impl Format {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => Ok(Format::Toml),
            Some("json") => Ok(Format::Json),
            _ => Err(format_err(path, "config must be .toml or .json")),
        }
    }
}

/// Every leaf key of `value` as `(dotted.path, leaf)`.
pub fn flatten(value: &Value) -> Vec<(String, Value)> {
    fn walk(prefix: &str, v: &Value, out: &mut Vec<(String, Value)>) {
        match v {
            Value::Object(map) => {
                for (k, child) in map {
                    let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&key, child, out);
                }
            }
            leaf => out.push((prefix.to_string(), leaf.clone())),
        }
    }
    let mut out = Vec::new();
    walk("", value, &mut out);
    out
}

/// Documented keys with their default values.
pub fn schema() -> Vec<(String, Value)> {
    let defaults = serde_json::to_value(TrainConfig::default()).expect("config serializes");
    flatten(&defaults)
}

fn set_path(root: &mut Value, key: &str, leaf: Value) -> Result<()> {
    let bad = |reason: &str| Error::ConfigKey { key: key.to_string(), reason: reason.to_string() };
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let map = node.as_object_mut().ok_or_else(|| bad("not a table"))?;
        let slot = map.get_mut(*part).ok_or_else(|| bad("unknown key"))?;
        if i + 1 == parts.len() {
            if slot.is_object() {
                return Err(bad("is a table, not a value"));
            }
            let compatible = matches!(
                (&*slot, &leaf),
                (Value::Number(_), Value::Number(_))
                    | (Value::Bool(_), Value::Bool(_))
                    | (Value::String(_), Value::String(_))
                    | (Value::Null, _)
            );
            if !compatible {
                return Err(bad(&format!("expected a value like {slot}, got {leaf}")));
            }
            *slot = leaf;
            return Ok(());
        }
        node = slot;
    }
    Err(bad("empty key"))
}

fn toml_to_json(v: toml::Value) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| Error::Usage(e.to_string()))
}

/// Parses configuration text over the defaults.
pub fn parse(text: &str, format: Format) -> Result<TrainConfig> {
    let source = Path::new(match format {
        Format::Toml => "<toml>",
        Format::Json => "<json>",
    });
    let parsed: Value = match format {
        Format::Toml => toml_to_json(toml::from_str::<toml::Value>(text).map_err(|e| format_err(source, e))?)?,
        Format::Json => serde_json::from_str(text).map_err(|e| format_err(source, e))?,
    };
    if !parsed.is_object() {
        return Err(format_err(source, "top level must be a table"));
    }
    let mut root = serde_json::to_value(TrainConfig::default()).expect("config serializes");
    for (key, leaf) in flatten(&parsed) {
        // JSON objects may carry dotted keys; split them like nested tables
        set_path(&mut root, &key, leaf)?;
    }
    let cfg: TrainConfig = serde_json::from_value(root).map_err(|e| format_err(source, e))?;
    Ok(cfg)
}

pub fn load(path: &Path) -> Result<TrainConfig> {
    let format = Format::from_path(path)?;
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse(&text, format).map_err(|e| match e {
        Error::Format { reason, .. } => format_err(path, reason),
        other => other,
    })
}

/// The configuration as a flat TOML document of dotted keys.
pub fn to_flat_toml(cfg: &TrainConfig) -> String {
    let value = serde_json::to_value(cfg).expect("config serializes");
    let mut out = String::new();
    for (k, v) in flatten(&value) {
        let rendered = match &v {
            Value::Null => continue,
            Value::String(s) => toml::Value::String(s.clone()).to_string(),
            other => other.to_string(),
        };
        out.push_str(&format!("{k} = {rendered}\n"));
    }
    out
}
