//! Per-epoch metric rows, written as JSON lines and CSV side by side.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, TrainError};

pub const METRICS_JSONL: &str = "metrics.jsonl";
pub const METRICS_CSV: &str = "metrics.csv";

/// One row of the metric log.
///
/// Training rows hold epoch means of every loss term and satisfy
/// `loss_total = loss_inst + loss_samp + omega * loss_cate + kd_weight * loss_kd + ce_weight * loss_ce`.
/// Test rows carry the test cross-entropy in both `loss_ce` and `loss_total`.
/// Accuracies are percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub epoch: usize,
    pub split: String,
    pub method: String,
    pub loss_total: f64,
    pub loss_inst: f64,
    pub loss_samp: f64,
    pub loss_cate: f64,
    pub loss_kd: f64,
    pub loss_ce: f64,
    pub kd_weight: f64,
    pub ce_weight: f64,
    pub omega: f64,
    pub top1: f64,
    pub top5: f64,
    pub lr: f64,
    pub queue_fill: usize,
    pub wall_seconds_per_batch: f64,
}

impl MetricRecord {
    pub fn empty(epoch: usize, split: &str, method: &str) -> Self {
        Self {
            epoch,
            split: split.into(),
            method: method.into(),
            loss_total: 0.0,
            loss_inst: 0.0,
            loss_samp: 0.0,
            loss_cate: 0.0,
            loss_kd: 0.0,
            loss_ce: 0.0,
            kd_weight: 0.0,
            ce_weight: 0.0,
            omega: 0.0,
            top1: 0.0,
            top5: 0.0,
            lr: 0.0,
            queue_fill: 0,
            wall_seconds_per_batch: 0.0,
        }
    }

    /// The weighted sum of the logged terms.
    pub fn recombined_total(&self) -> f64 {
        self.loss_inst
            + self.loss_samp
            + self.omega * self.loss_cate
            + self.kd_weight * self.loss_kd
            + self.ce_weight * self.loss_ce
    }
}

/// Appends records to `metrics.jsonl` and `metrics.csv` in a directory.
pub struct MetricsWriter {
    jsonl: File,
    csv: csv::Writer<File>,
    jsonl_path: PathBuf,
}

impl MetricsWriter {
    /// Starts fresh log files, dropping any existing ones.
    pub fn create(dir: &Path) -> Result<Self> {
        Self::with_records(dir, &[])
    }

    /// Rewrites the logs to hold exactly `keep`, then continues appending.
    pub fn with_records(dir: &Path, keep: &[MetricRecord]) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| TrainError::io(dir, e))?;
        let jsonl_path = dir.join(METRICS_JSONL);
        let csv_path = dir.join(METRICS_CSV);
        let jsonl = File::create(&jsonl_path).map_err(|e| TrainError::io(&jsonl_path, e))?;
        let csv_file = File::create(&csv_path).map_err(|e| TrainError::io(&csv_path, e))?;
        let mut w = Self { jsonl, csv: csv::Writer::from_writer(csv_file), jsonl_path };
        for r in keep {
            w.append(r)?;
        }
        w.flush()?;
        Ok(w)
    }

    /// Opens existing logs for appending; the CSV header is not repeated.
    pub fn append_to(dir: &Path) -> Result<Self> {
        let jsonl_path = dir.join(METRICS_JSONL);
        let csv_path = dir.join(METRICS_CSV);
        let has_csv = csv_path.exists();
        let open = |p: &Path| OpenOptions::new().create(true).append(true).open(p).map_err(|e| TrainError::io(p, e));
        let jsonl = open(&jsonl_path)?;
        let csv = csv::WriterBuilder::new().has_headers(!has_csv).from_writer(open(&csv_path)?);
        Ok(Self { jsonl, csv, jsonl_path })
    }

    pub fn append(&mut self, record: &MetricRecord) -> Result<()> {
        let line = serde_json::to_string(record)?;
        writeln!(self.jsonl, "{line}").map_err(|e| TrainError::io(&self.jsonl_path, e))?;
        self.csv.serialize(record)?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.jsonl.flush().map_err(|e| TrainError::io(&self.jsonl_path, e))?;
        self.csv.flush().map_err(|e| TrainError::io(&self.jsonl_path, e))
    }
}

/// Reads every record of a `metrics.jsonl` file.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricRecord>> {
    let file = File::open(path).map_err(|e| TrainError::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| TrainError::io(path, e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
