//! JSON-lines training log.

use std::io::Write;
use std::path::Path;

use clickmat_core::losses::LossReport;
use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub stage: String,
    pub epoch: usize,
    pub step: usize,
    pub lr: f64,
    /// Rebuilds the batch (augmentation and clicks) together with `indices`.
    pub batch_seed: u64,
    pub indices: Vec<usize>,
    /// Batch mean, computed on the weights before this step's update.
    pub loss: LossReport,
    /// Mean absolute alpha error of the batch predictions.
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub stage: String,
    pub epoch: usize,
    pub mean_loss: f64,
    /// Held-out objective, when a validation set was given.
    pub validation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LogEntry {
    Step(StepRecord),
    Epoch(EpochRecord),
    Note { stage: String, message: String },
}

/// Collects entries in memory and optionally appends them to a file.
#[derive(Default)]
pub struct TrainLog {
    pub entries: Vec<LogEntry>,
    sink: Option<std::io::BufWriter<std::fs::File>>,
}

impl TrainLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn to_file(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            entries: Vec::new(),
            sink: Some(std::io::BufWriter::new(file)),
        })
    }

    pub fn push(&mut self, entry: LogEntry) -> Result<()> {
        if let Some(sink) = &mut self.sink {
            serde_json::to_writer(&mut *sink, &entry)?;
            sink.write_all(b"\n")?;
            sink.flush()?;
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn steps(&self, stage: &str) -> impl Iterator<Item = &StepRecord> {
        let stage = stage.to_string();
        self.entries.iter().filter_map(move |e| match e {
            LogEntry::Step(r) if r.stage == stage => Some(r),
            _ => None,
        })
    }

    pub fn epochs(&self, stage: &str) -> impl Iterator<Item = &EpochRecord> {
        let stage = stage.to_string();
        self.entries.iter().filter_map(move |e| match e {
            LogEntry::Epoch(r) if r.stage == stage => Some(r),
            _ => None,
        })
    }
}

pub fn read_log(path: &Path) -> Result<Vec<LogEntry>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}
