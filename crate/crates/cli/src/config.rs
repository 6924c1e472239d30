//! Flat JSON configs: defaults, then the `--config` file, then flags.

use std::path::Path;

use herding::HerdingError;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub msg: String,
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError { code: EXIT_CONFIG, msg: msg.into() }
    }
}

impl From<HerdingError> for CliError {
    fn from(e: HerdingError) -> Self {
        let code = match e {
            HerdingError::PctViolation { .. }
            | HerdingError::NonFiniteWeight { .. }
            | HerdingError::EnergyIncreased { .. }
            | HerdingError::Overflow
            | HerdingError::Io(_) => EXIT_RUNTIME,
            _ => EXIT_CONFIG,
        };
        CliError { code, msg: e.to_string() }
    }
}

/// Errors while loading inputs are configuration errors whatever their kind.
pub fn input_err(what: &str) -> impl Fn(HerdingError) -> CliError + '_ {
    move |e| CliError::config(format!("{what}: {e}"))
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn as_object(v: Value, what: &str) -> CliResult<Map<String, Value>> {
    match v {
        Value::Object(m) => Ok(m),
        _ => Err(CliError::config(format!("{what} must be a JSON object"))),
    }
}

/// Layers the config file and the flags over `base`, returning the merged
/// flat object. Null flag values are skipped.
pub fn merge(base: impl Serialize, file: Option<&Path>, flags: impl Serialize) -> CliResult<Map<String, Value>> {
    let mut out = as_object(serde_json::to_value(base).map_err(|e| CliError::config(e.to_string()))?, "defaults")?;
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        let v: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("config {}: {e}", path.display())))?;
        out.extend(as_object(v, "config file")?);
    }
    let flags = as_object(serde_json::to_value(flags).map_err(|e| CliError::config(e.to_string()))?, "flags")?;
    out.extend(flags.into_iter().filter(|(_, v)| !v.is_null()));
    Ok(out)
}

pub fn parse<T: DeserializeOwned>(obj: Map<String, Value>) -> CliResult<T> {
    serde_json::from_value(Value::Object(obj)).map_err(|e| CliError::config(e.to_string()))
}

/// Removes and returns the entries whose keys are in `keys`.
pub fn take_keys(obj: &mut Map<String, Value>, keys: &[&str]) -> Map<String, Value> {
    keys.iter().filter_map(|k| obj.remove(*k).map(|v| (k.to_string(), v))).collect()
}

/// Resolves `T` from defaults, file and flags; also returns the resolved
/// config as JSON for embedding in outputs.
pub fn resolve<T: Serialize + DeserializeOwned>(
    base: T,
    file: Option<&Path>,
    flags: impl Serialize,
) -> CliResult<(T, Value)> {
    let cfg: T = parse(merge(base, file, flags)?)?;
    let json = serde_json::to_value(&cfg).map_err(|e| CliError::config(e.to_string()))?;
    Ok((cfg, json))
}
