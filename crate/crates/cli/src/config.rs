//! JSON config files. Keys are the long flag names of the subcommand; flags
//! given on the command line win over the file.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

/// Bad flags, bad config or missing inputs. Maps to exit code 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

pub fn load(path: &Path) -> anyhow::Result<Map<String, Value>> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(usage(format!("config {} must be a JSON object", path.display()))),
        Err(e) => Err(usage(format!("invalid config {}: {e}", path.display()))),
    }
}

/// Overlays the explicitly given flags of `cli` onto `file`.
pub fn merge<T: Serialize + DeserializeOwned>(cli: &T, file: Map<String, Value>) -> anyhow::Result<T> {
    let mut merged = file;
    if let Value::Object(flags) = serde_json::to_value(cli)? {
        for (key, value) in flags {
            let unset = value.is_null() || value.as_array().is_some_and(|a| a.is_empty());
            if !unset {
                merged.insert(key, value);
            }
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| usage(format!("invalid config: {e}")))
}
