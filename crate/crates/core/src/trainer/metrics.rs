//! Line-delimited metrics records.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::evaluate::EvalReport;

/// One evaluation checkpoint during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    /// Training episodes completed when the evaluation ran.
    pub episode: usize,
    pub epsilon: f64,
    pub mean_returns: Vec<f64>,
    pub joint_return: f64,
    pub joint_return_std: f64,
    pub success_rate: f64,
    /// Mean critic loss over the epochs since the previous record.
    #[serde(default)]
    pub critic_loss: Option<f64>,
}

impl MetricRecord {
    pub fn from_eval(episode: usize, epsilon: f64, eval: &EvalReport, critic_loss: Option<f64>) -> Self {
        Self {
            episode,
            epsilon,
            mean_returns: eval.mean_returns.clone(),
            joint_return: eval.joint_return,
            joint_return_std: eval.joint_return_std,
            success_rate: eval.success_rate,
            critic_loss,
        }
    }
}

pub struct MetricsWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn write(&mut self, record: &MetricRecord) -> Result<()> {
        let line = serde_json::to_string(record)?;
        writeln!(self.out, "{line}").and_then(|_| self.out.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
