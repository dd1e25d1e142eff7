//! Optional TOML config file, one table per subcommand. Command-line flags
//! win over file values; keys the subcommand does not know are rejected.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::CliError;

pub const SECTIONS: &[&str] = &["synth", "train", "localize", "ablate", "gradcheck", "export-check"];

/// Parses the file and returns the table for `section` (empty when absent).
pub fn load_section(path: &Path, section: &str) -> Result<Map<String, Value>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let table: toml::Table =
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    for key in table.keys() {
        if !SECTIONS.contains(&key.as_str()) {
            return Err(CliError::Config(format!(
                "{}: unknown section [{key}]; expected one of {}",
                path.display(),
                SECTIONS.join(", ")
            )));
        }
    }
    match table.get(section) {
        None => Ok(Map::new()),
        Some(toml::Value::Table(t)) => match serde_json::to_value(t) {
            Ok(Value::Object(m)) => Ok(m),
            _ => Err(CliError::Config(format!("[{section}] is not a table"))),
        },
        Some(_) => Err(CliError::Config(format!("[{section}] is not a table"))),
    }
}

/// Flags that were not given serialize as null, false or an empty list.
fn given(v: &Value) -> bool {
    match v {
        Value::Null | Value::Bool(false) => false,
        Value::Array(a) => !a.is_empty(),
        _ => true,
    }
}

/// Overlays explicitly given flags on top of the file section.
pub fn merge<T: Serialize + DeserializeOwned + Default>(flags: &T, file: Map<String, Value>) -> Result<T, CliError> {
    let known = match serde_json::to_value(T::default()) {
        Ok(Value::Object(m)) => m,
        _ => unreachable!("argument structs serialize to objects"),
    };
    for key in file.keys() {
        if !known.contains_key(key) {
            let mut names: Vec<_> = known.keys().cloned().collect();
            names.sort();
            return Err(CliError::Config(format!(
                "unknown config key {key:?}; known keys: {}",
                names.join(", ")
            )));
        }
    }
    let mut merged = file;
    if let Ok(Value::Object(f)) = serde_json::to_value(flags) {
        for (k, v) in f {
            if given(&v) {
                merged.insert(k, v);
            }
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::Config(format!("config: {e}")))
}
