//! Files written by a run: per-epoch CSV, summary CSV, record log and manifest.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{AtlasError, Result};
use crate::model::Variant;

use super::config::ExperimentConfig;
use super::record::TrialRecord;
use super::stats::{aggregate, SummaryRow};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

pub const RESULTS_HEADER: &str = "trial_id,n,delta,variant,lr,noise,task,split,epoch,mae";

const STREAM_DERIVATION: &str = "ChaCha8 seeded from master_seed; stream id = SplitMix64 fold \
of the key path. Trial data: [0x0074_7269_616c, n, delta bits, trial_index]; drawn in order \
lr, noise, task-1 RBF (centers, scales, weights), replacement RBF, region lower corner, then \
task-1 train/validation/test and task-2 train/validation/test. Minibatch shuffles: \
[0x7368_7566_666c, n, delta bits, trial_index], restarted for each variant.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub master_seed: u64,
    pub stream_derivation: String,
    pub config: ExperimentConfig,
    /// Set once the run has finished.
    pub record_count: Option<usize>,
}

impl Manifest {
    pub fn new(config: &ExperimentConfig, record_count: Option<usize>) -> Self {
        Self {
            tool: "atlas".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            master_seed: config.master_seed,
            stream_derivation: STREAM_DERIVATION.to_string(),
            config: config.clone(),
            record_count,
        }
    }
}

pub fn write_manifest(
    dir: &Path,
    config: &ExperimentConfig,
    record_count: Option<usize>,
) -> Result<()> {
    let text = serde_json::to_string_pretty(&Manifest::new(config, record_count))?;
    write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    Ok(serde_json::from_str(&fs::read_to_string(
        dir.join(MANIFEST_FILE),
    )?)?)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// One data row of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub trial_id: String,
    pub n: usize,
    pub delta: f64,
    pub variant: Variant,
    pub lr: f64,
    pub noise: f64,
    pub task: u8,
    pub split: String,
    pub epoch: usize,
    pub mae: f64,
}

/// Per-epoch train and validation rows for both tasks, then one `test` row
/// holding the final Task 2 test MAE (epoch = Task 2 epoch count).
pub fn result_rows(rec: &TrialRecord) -> Vec<ResultRow> {
    let row = |task: u8, split: &str, epoch: usize, mae: f64| ResultRow {
        trial_id: rec.trial_id.clone(),
        n: rec.n,
        delta: rec.delta,
        variant: rec.variant,
        lr: rec.lr,
        noise: rec.noise,
        task,
        split: split.to_string(),
        epoch,
        mae,
    };
    let mut rows = Vec::new();
    for (task, curve) in [(1u8, &rec.task1), (2u8, &rec.task2)] {
        for (split, values) in [("train", &curve.train), ("validation", &curve.validation)] {
            for (e, &mae) in values.iter().enumerate() {
                rows.push(row(task, split, e + 1, mae));
            }
        }
    }
    if let Some(mae) = rec.task2_test_mae {
        rows.push(row(2, "test", rec.task2.validation.len(), mae));
    }
    rows
}

fn csv_error(e: csv::Error) -> AtlasError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => AtlasError::Io(io),
        other => AtlasError::Format(format!("{other:?}")),
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut out = csv::Writer::from_path(path).map_err(csv_error)?;
    for row in rows {
        out.serialize(row).map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes `results.csv` and `summary.csv` into `dir`.
pub fn emit_results(records: &[TrialRecord], dir: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(AtlasError::invalid("no records to emit"));
    }
    fs::create_dir_all(dir)?;
    write_csv(
        &dir.join(RESULTS_FILE),
        records.iter().flat_map(result_rows),
    )?;
    write_csv(&dir.join(SUMMARY_FILE), aggregate(records))?;
    Ok(())
}

pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_error)?;
    reader
        .deserialize()
        .map(|row| row.map_err(csv_error))
        .collect()
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_error)?;
    reader
        .deserialize()
        .map(|row| row.map_err(csv_error))
        .collect()
}
