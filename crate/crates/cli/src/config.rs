use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use subnyq_core::experiments::ExperimentConfig;

use crate::error::{CliError, Result};

/// Parses a JSON document, reporting syntax and schema errors with their
/// line and column.
pub fn parse_json<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| CliError::Config {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_json(path, &text)
}

/// Loads and validates an experiment configuration.
pub fn load_experiment(path: &Path) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = read_json(path)?;
    cfg.validate().map_err(CliError::InvalidConfig)?;
    Ok(cfg)
}
