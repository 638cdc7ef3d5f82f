//! Self-describing run directories.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, EnvKind};
use crate::error::{Error, Result};
use crate::nn::checkpoint::write_atomic;
use crate::nn::Stage;
use crate::trainer::{Method, TrainerConfig};

pub const RUN_ROOT_VAR: &str = "CM3_RUN_ROOT";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub status: RunStatus,
    pub seed: u64,
    pub stage: Stage,
    pub method: Method,
    pub env: EnvKind,
    pub env_config: EnvConfig,
    pub trainer: TrainerConfig,
    /// Stage-One checkpoint restored by this run.
    pub input_checkpoint: Option<PathBuf>,
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
    pub started_unix_ms: u64,
    pub finished_unix_ms: Option<u64>,
    pub elapsed_secs: Option<f64>,
    pub error: Option<String>,
}

pub fn now_unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

/// `$CM3_RUN_ROOT`, or `runs` in the working directory.
pub fn run_root() -> PathBuf {
    std::env::var_os(RUN_ROOT_VAR).map_or_else(|| PathBuf::from("runs"), PathBuf::from)
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let path = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn finish(&mut self, outcome: std::result::Result<(), String>) {
        let now = now_unix_ms();
        self.finished_unix_ms = Some(now);
        self.elapsed_secs = Some(now.saturating_sub(self.started_unix_ms) as f64 / 1000.0);
        match outcome {
            Ok(()) => self.status = RunStatus::Complete,
            Err(e) => {
                self.status = RunStatus::Failed;
                self.error = Some(e);
            }
        }
    }
}
