//! Command-line front end: run configs, prediction and simulation drivers,
//! CSV/JSON artifacts, and theory-vs-simulation comparison tables.

pub mod compare;
pub mod config;
pub mod predict;
pub mod simulate;
pub mod table1;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{ExperimentKind, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Runtime(_) => 3,
        }
    }
}

impl From<jdet_core::Error> for CliError {
    fn from(e: jdet_core::Error) -> Self {
        match e {
            jdet_core::Error::Config(msg) => Self::Config(msg),
            jdet_core::Error::Domain(_) => Self::Config(e.to_string()),
            _ => Self::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}

/// Writes `contents` to `dir/name`, creating `dir` as needed.
pub fn write_artifact(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

pub fn to_json<T: serde::Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Number text for file names: `5`, `7.5`, `-1`.
pub fn name_number(v: f64) -> String {
    format!("{v}")
}
