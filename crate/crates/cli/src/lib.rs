//! Library surface of the experiment runner, split out so integration tests
//! can drive commands without spawning processes.

pub mod commands;
pub mod config;

pub use commands::{run_command, RunError, RunResult};

use serde_json::Value;
use std::path::Path;

/// Applies the `--seed` / `--grid-steps` overrides to a raw config document.
pub fn apply_overrides(
    config_text: &str,
    seed: Option<u64>,
    grid_steps: Option<usize>,
) -> Result<String, RunError> {
    if seed.is_none() && grid_steps.is_none() {
        return Ok(config_text.to_string());
    }
    let mut doc: Value = serde_json::from_str(config_text)
        .map_err(|e| RunError::Config(format!("config parse error: {e}")))?;
    let obj = doc
        .as_object_mut()
        .ok_or_else(|| RunError::Config("config must be a JSON object".into()))?;
    if let Some(s) = seed {
        obj.insert("seed".into(), Value::from(s));
    }
    if let Some(n) = grid_steps {
        obj.insert("grid_steps".into(), Value::from(n));
    }
    serde_json::to_string(&doc).map_err(|e| RunError::Config(e.to_string()))
}

/// Loads the config file and runs one command; `out` is created if needed.
pub fn run_from_files(
    command: &str,
    config_path: &Path,
    out: &Path,
    seed: Option<u64>,
    grid_steps: Option<usize>,
) -> RunResult {
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| RunError::Config(format!("cannot read config: {e}")))?;
    let text = apply_overrides(&text, seed, grid_steps)?;
    let base = config_path.parent().unwrap_or_else(|| Path::new("."));
    run_command(command, &text, base, out)
}
