use serde::Serialize;
use std::path::{Path, PathBuf};
use trep_core::trainer::TrainConfig;
use trep_core::Result;

/// Record of one command invocation, written next to its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub config: TrainConfig,
    pub map_hash: Option<String>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub checkpoints: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, config: &TrainConfig) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            seed: config.seed,
            config: config.clone(),
            map_hash: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            checkpoints: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.display().to_string());
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn checkpoint(&mut self, path: &Path) {
        self.checkpoints.push(path.display().to_string());
    }

    /// Writes `<command>.manifest.json` into `dir` and returns its path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(format!("{}.manifest.json", self.command));
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text)?;
        Ok(path)
    }
}
