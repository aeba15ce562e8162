//! Error classes and JSON config merging shared by all subcommands.

use std::path::Path;

use fracsde::error::ErrorClass;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) | CliError::Numerical(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<fracsde::Error> for CliError {
    fn from(e: fracsde::Error) -> Self {
        match e.class() {
            ErrorClass::Config => CliError::Config(e.to_string()),
            ErrorClass::Numerical => CliError::Numerical(e.to_string()),
            ErrorClass::Io => CliError::Io(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Reads a JSON file; a missing or unreadable file is an I/O error, a
/// malformed one a configuration error.
pub fn read_json(path: &Path) -> CliResult<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

/// Overlays the non-null entries of `flags` on the optional config file and
/// deserializes the result. Keys use the flag names with `-` replaced by `_`.
pub fn resolve<T: DeserializeOwned>(file: Option<&Path>, flags: &impl Serialize) -> CliResult<T> {
    let mut merged = match file {
        Some(path) => match read_json(path)? {
            Value::Object(map) => map,
            _ => return Err(CliError::Config(format!("{}: config must be a JSON object", path.display()))),
        },
        None => Map::new(),
    };
    let flags = serde_json::to_value(flags).map_err(|e| CliError::Config(e.to_string()))?;
    if let Value::Object(map) = flags {
        for (k, v) in map {
            if !v.is_null() {
                merged.insert(k, v);
            }
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::Config(format!("configuration: {e}")))
}

/// Parses a comma-separated list of numbers; `inf`/`-inf` are accepted.
pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(|t| t.trim().parse::<f64>().map_err(|_| format!("cannot parse `{t}` as a number"))).collect()
}
