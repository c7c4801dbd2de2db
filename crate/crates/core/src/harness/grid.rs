//! Continual-learning grid over input dimension and update-region width.
//!
//! Every trial draws from its own stream keyed by `(n, delta, trial_index)`.
//! All datasets are sampled before any model trains, so the two variants of
//! a trial see identical data and identical shuffles.

use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{AtlasError, Result};
use crate::model::{AtlasModel, Variant};
use crate::optim::{dataset_mae, train_epochs, TrainConfig, TrainCurve};
use crate::rng::Stream;
use crate::targets::{sample_dataset, Dataset, PatchedTarget, RbfTarget, SampleBox};

use super::config::ExperimentConfig;
use super::record::{trial_id, TrialRecord, TrialStatus};
use super::results::{emit_results, write_manifest, Manifest, RECORDS_FILE};
use super::stats::{aggregate, SummaryRow};

const TRIAL_STREAM: u64 = 0x0074_7269_616c;
const SHUFFLE_STREAM: u64 = 0x7368_7566_666c;

/// Key path of the trial's data stream.
pub fn trial_stream_key(n: usize, delta: f64, trial_index: usize) -> [u64; 4] {
    [TRIAL_STREAM, n as u64, delta.to_bits(), trial_index as u64]
}

/// Key path of the stream each variant uses to shuffle minibatches.
pub fn shuffle_stream_key(n: usize, delta: f64, trial_index: usize) -> [u64; 4] {
    [
        SHUFFLE_STREAM,
        n as u64,
        delta.to_bits(),
        trial_index as u64,
    ]
}

/// Targets and splits shared by both variants of one trial.
#[derive(Debug, Clone)]
pub struct TrialData {
    pub lr: f64,
    pub noise: f64,
    pub task2_target: PatchedTarget,
    pub task1_train: Dataset,
    pub task1_validation: Dataset,
    pub task1_test: Dataset,
    pub task2_train: Dataset,
    pub task2_validation: Dataset,
    pub task2_test: Dataset,
}

/// Draws learning rate, noise, targets and all six splits for one trial.
pub fn sample_trial_data(
    config: &ExperimentConfig,
    n: usize,
    delta: f64,
    trial_index: usize,
) -> Result<TrialData> {
    let mut rng = Stream::substream(config.master_seed, &trial_stream_key(n, delta, trial_index));
    let lr = config.lr_mode.draw(&mut rng);
    let noise = config.noise_mode.draw(&mut rng);
    let task1 = RbfTarget::sample_with_count(n, config.rbf_count, &mut rng)?;
    let replacement = RbfTarget::sample_with_count(n, config.rbf_count, &mut rng)?;
    let region_lo: Vec<f64> = (0..n).map(|_| rng.uniform_in(0.0, 1.0 - delta)).collect();
    let task2 = PatchedTarget::new(task1.clone(), region_lo, delta, replacement)?;

    let count = config.points_per_split;
    let unit = SampleBox::unit(n);
    let task1_train = sample_dataset(&task1, count, &unit, noise, &mut rng)?;
    let task1_validation = sample_dataset(&task1, count, &unit, 0.0, &mut rng)?;
    let task1_test = sample_dataset(&task1, count, &unit, 0.0, &mut rng)?;
    let task2_train = sample_dataset(&task2, count, &task2.region(), noise, &mut rng)?;
    let task2_validation = sample_dataset(&task2, count, &unit, 0.0, &mut rng)?;
    let task2_test = sample_dataset(&task2, count, &unit, 0.0, &mut rng)?;
    Ok(TrialData {
        lr,
        noise,
        task2_target: task2,
        task1_train,
        task1_validation,
        task1_test,
        task2_train,
        task2_validation,
        task2_test,
    })
}

struct Progress {
    task1: TrainCurve,
    task2: TrainCurve,
    task1_test: Option<f64>,
    task2_test: Option<f64>,
    task1_after: Option<f64>,
}

fn train_variant(
    config: &ExperimentConfig,
    data: &TrialData,
    variant: Variant,
    n: usize,
    shuffle: &mut Stream,
    progress: &mut Progress,
) -> Result<()> {
    let mut model = AtlasModel::new(n, 1, config.m, config.r, variant)?;
    let train = |epochs| TrainConfig {
        epochs,
        batch_size: config.batch_size,
        lr: data.lr,
        adam_mode: config.adam_mode,
    };
    progress.task1 = train_epochs(
        &mut model,
        &data.task1_train,
        &data.task1_validation,
        &train(config.epochs_task1),
        shuffle,
    )?;
    progress.task1_test = Some(dataset_mae(&model, &data.task1_test)?);
    progress.task2 = train_epochs(
        &mut model,
        &data.task2_train,
        &data.task2_validation,
        &train(config.epochs_task2),
        shuffle,
    )?;
    progress.task2_test = Some(dataset_mae(&model, &data.task2_test)?);
    progress.task1_after = Some(dataset_mae(&model, &data.task1_test)?);
    Ok(())
}

/// Trains the default and the all-banks-trainable variant on the same trial data.
///
/// A numeric-range failure ends that variant's run with a `Failed` status
/// instead of aborting the grid.
pub fn run_grid_trial(
    config: &ExperimentConfig,
    n: usize,
    delta: f64,
    trial_index: usize,
) -> Result<[TrialRecord; 2]> {
    let data = sample_trial_data(config, n, delta, trial_index)?;
    let run = |variant: Variant| -> TrialRecord {
        let started = Instant::now();
        let mut shuffle = Stream::substream(
            config.master_seed,
            &shuffle_stream_key(n, delta, trial_index),
        );
        let mut progress = Progress {
            task1: TrainCurve::default(),
            task2: TrainCurve::default(),
            task1_test: None,
            task2_test: None,
            task1_after: None,
        };
        let status = match train_variant(config, &data, variant, n, &mut shuffle, &mut progress) {
            Ok(()) => TrialStatus::Completed,
            Err(e) => TrialStatus::Failed {
                message: e.to_string(),
            },
        };
        TrialRecord {
            trial_id: trial_id(n, delta, trial_index),
            trial_index,
            n,
            delta,
            lr: data.lr,
            noise: data.noise,
            variant,
            seed: config.master_seed,
            task1: progress.task1,
            task2: progress.task2,
            task1_test_mae: progress.task1_test,
            task2_test_mae: progress.task2_test,
            task1_test_mae_after_task2: progress.task1_after,
            status,
            wall_clock_s: started.elapsed().as_secs_f64(),
        }
    };
    Ok([
        run(Variant::DistalOrthogonal),
        run(Variant::AllDensitiesTrainable),
    ])
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub records: Vec<TrialRecord>,
    pub summary: Vec<SummaryRow>,
}

fn read_records(path: &Path) -> Result<Vec<TrialRecord>> {
    let file = File::open(path)?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        // a torn final line from an interrupted run is dropped and recomputed
        match serde_json::from_str::<TrialRecord>(&line) {
            Ok(rec) => out.push(rec),
            Err(_) => continue,
        }
    }
    Ok(out)
}

fn sort_records(records: &mut [TrialRecord], config: &ExperimentConfig) {
    let pos = |rec: &TrialRecord| {
        let d = config
            .dims
            .iter()
            .position(|&n| n == rec.n)
            .unwrap_or(usize::MAX);
        let w = config
            .widths
            .iter()
            .position(|&w| w.to_bits() == rec.delta.to_bits())
            .unwrap_or(usize::MAX);
        (
            d,
            w,
            rec.trial_index,
            rec.variant == Variant::AllDensitiesTrainable,
        )
    };
    records.sort_by_key(pos);
}

/// Runs every `(n, delta, trial)` cell.
///
/// With `out_dir`, records are appended to `records.jsonl` as trials finish,
/// cells already present there are skipped, and the CSV, summary and manifest
/// are written at the end.
pub fn run_grid(config: &ExperimentConfig, out_dir: Option<&Path>) -> Result<GridOutcome> {
    config.validate()?;
    let mut done: Vec<TrialRecord> = Vec::new();
    let sink = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let manifest_path = dir.join(super::results::MANIFEST_FILE);
            if manifest_path.exists() {
                let existing: Manifest =
                    serde_json::from_str(&fs::read_to_string(&manifest_path)?)?;
                let mut previous = existing.config;
                previous.workers = config.workers;
                if previous != *config {
                    return Err(AtlasError::invalid(format!(
                        "{} holds results for a different configuration",
                        dir.display()
                    )));
                }
            }
            write_manifest(dir, config, None)?;
            let records_path = dir.join(RECORDS_FILE);
            if records_path.exists() {
                done = read_records(&records_path)?;
            }
            // rewrite without any torn line so appends start on a fresh line
            let mut file = File::create(&records_path)?;
            for rec in &done {
                writeln!(file, "{}", serde_json::to_string(rec)?)?;
            }
            drop(file);
            Some(Mutex::new(
                OpenOptions::new().append(true).open(&records_path)?,
            ))
        }
        None => None,
    };

    let finished: HashSet<String> = {
        let mut per_id: std::collections::HashMap<String, usize> = Default::default();
        for rec in &done {
            *per_id.entry(rec.trial_id.clone()).or_default() += 1;
        }
        per_id
            .into_iter()
            .filter(|(_, c)| *c >= 2)
            .map(|(id, _)| id)
            .collect()
    };
    done.retain(|rec| finished.contains(&rec.trial_id));

    let mut todo = Vec::new();
    for &n in &config.dims {
        for &delta in &config.widths {
            for t in 0..config.trials {
                if !finished.contains(&trial_id(n, delta, t)) {
                    todo.push((n, delta, t));
                }
            }
        }
    }

    let work = |&(n, delta, t): &(usize, f64, usize)| -> Result<Vec<TrialRecord>> {
        let pair = run_grid_trial(config, n, delta, t)?;
        if let Some(sink) = &sink {
            let mut file = sink.lock().expect("record sink poisoned");
            let mut buf = String::new();
            for rec in &pair {
                buf.push_str(&serde_json::to_string(rec)?);
                buf.push('\n');
            }
            file.write_all(buf.as_bytes())?;
            file.flush()?;
        }
        Ok(pair.into())
    };
    let fresh: Vec<Vec<TrialRecord>> = if config.workers == 1 {
        todo.iter().map(work).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| AtlasError::invalid(e.to_string()))?;
        pool.install(|| todo.par_iter().map(work).collect::<Result<_>>())?
    };

    let mut records = done;
    records.extend(fresh.into_iter().flatten());
    sort_records(&mut records, config);
    let summary = aggregate(&records);
    if let Some(dir) = out_dir {
        emit_results(&records, dir)?;
        write_manifest(dir, config, Some(records.len()))?;
    }
    Ok(GridOutcome { records, summary })
}
