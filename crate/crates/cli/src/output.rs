//! Provenance stamping and file writing.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

pub const TOOL: &str = "subspace-probe";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn provenance<C: Serialize>(command: &str, config: &C) -> Value {
    json!({
        "tool": TOOL,
        "version": VERSION,
        "command": command,
        "config": config,
    })
}

/// One-line form used in CSV and SVG comments.
pub fn provenance_line(p: &Value) -> String {
    serde_json::to_string(p).expect("provenance serializes")
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

/// Serializes `value` as a JSON object with a `provenance` key added.
pub fn write_json_with<T: Serialize>(path: &Path, value: &T, prov: &Value) -> Result<()> {
    let mut v = serde_json::to_value(value)?;
    match &mut v {
        Value::Object(map) => {
            map.insert("provenance".into(), prov.clone());
        }
        _ => anyhow::bail!("expected a JSON object"),
    }
    write_text(path, &(serde_json::to_string_pretty(&v)? + "\n"))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
