//! Run manifests: the resolved config and seed of a command, written before any
//! result so that an interrupted run still says what it was doing.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::commands::CliError;

pub const KIND: &str = "dfl-manifest";

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: String,
    pub tool_version: String,
    pub command: String,
    pub seed: u64,
    pub config: Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// Wall time in seconds; absent until the command finishes.
    pub elapsed_s: Option<f64>,
}

pub struct ManifestWriter {
    path: PathBuf,
    manifest: Manifest,
    started: Instant,
}

impl ManifestWriter {
    pub fn start(
        out: &Path,
        command: &str,
        seed: u64,
        config: Value,
        inputs: Vec<PathBuf>,
        outputs: Vec<PathBuf>,
    ) -> Result<Self, CliError> {
        let w = Self {
            path: out.join("manifest.json"),
            manifest: Manifest {
                kind: KIND.to_string(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                command: command.to_string(),
                seed,
                config,
                inputs,
                outputs,
                elapsed_s: None,
            },
            started: Instant::now(),
        };
        w.write()?;
        Ok(w)
    }

    fn write(&self) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        std::fs::write(&self.path, text + "\n").map_err(|e| CliError::runtime(format!("{}: {e}", self.path.display())))
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.manifest.elapsed_s = Some(self.started.elapsed().as_secs_f64());
        self.write()
    }
}

/// A config file, or the config snapshot and seed stored in a manifest.
pub struct LoadedConfig {
    pub config: Value,
    pub seed: Option<u64>,
}

pub fn load_config_value(path: &Path) -> Result<LoadedConfig, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    if value.get("kind").and_then(Value::as_str) == Some(KIND) {
        let m: Manifest =
            serde_json::from_value(value).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        return Ok(LoadedConfig {
            config: m.config,
            seed: Some(m.seed),
        });
    }
    Ok(LoadedConfig { config: value, seed: None })
}
