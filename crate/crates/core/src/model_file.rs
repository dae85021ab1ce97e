//! Versioned, canonical JSON model files.
//!
//! Object keys are written in sorted order and every float with 17
//! significant digits, so equal models produce identical bytes and a
//! round trip reproduces every parameter bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::Schema;
use crate::error::{MspnError, Result};
use crate::structure::{validate, LearnConfig, Mspn, MspnNode, NodeId, ViolationKind};

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u64,
    pub schema: Schema,
    pub config: LearnConfig,
    pub seed: u64,
    pub root: NodeId,
    pub nodes: Vec<MspnNode>,
}

impl ModelFile {
    pub fn from_mspn(mspn: &Mspn) -> Self {
        ModelFile {
            format_version: FORMAT_VERSION,
            schema: mspn.schema().clone(),
            config: mspn.config().clone(),
            seed: mspn.config().seed,
            root: mspn.root(),
            nodes: mspn.nodes().to_vec(),
        }
    }

    pub fn into_mspn(self) -> Result<Mspn> {
        let mspn = Mspn::from_nodes(self.schema, self.config, self.nodes, self.root)?;
        let report = validate(&mspn);
        if report.has(ViolationKind::Tree) {
            return Err(MspnError::Format(format!("node graph is not a tree:\n{report}")));
        }
        Ok(mspn)
    }
}

pub fn serialize(mspn: &Mspn) -> String {
    let value = serde_json::to_value(ModelFile::from_mspn(mspn)).expect("model converts to JSON");
    let mut out = String::new();
    write_canonical(&value, &mut out);
    out.push('\n');
    out
}

pub fn deserialize(text: &str) -> Result<Mspn> {
    let value: Value = serde_json::from_str(text).map_err(|e| MspnError::Format(e.to_string()))?;
    let version = value
        .get("format_version")
        .ok_or_else(|| MspnError::Format("missing format_version".into()))?
        .as_u64()
        .ok_or_else(|| MspnError::Format("format_version must be a non-negative integer".into()))?;
    if version != FORMAT_VERSION {
        return Err(MspnError::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let file: ModelFile = serde_json::from_value(value).map_err(|e| MspnError::Format(e.to_string()))?;
    file.into_mspn()
}

pub fn save_model(mspn: &Mspn, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, serialize(mspn))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Mspn> {
    deserialize(&std::fs::read_to_string(path)?)
}

/// Float text with 17 significant digits; exact for every finite f64.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_canonical(value: &Value, out: &mut String) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_u64() {
                let _ = write!(out, "{i}");
            } else if let Some(i) = n.as_i64() {
                let _ = write!(out, "{i}");
            } else {
                out.push_str(&format_float(n.as_f64().expect("finite number")));
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            out.push('[');
            for (k, item) in items.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (k, key) in keys.into_iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(key.clone()).to_string());
                out.push(':');
                write_canonical(&map[key], out);
            }
            out.push('}');
        }
    }
}
