//! Train-expand protocol on the two-variable analytic targets.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{AtlasModel, Variant};
use crate::model_file;
use crate::optim::{dataset_mae, train_epochs, TrainConfig, TrainCurve};
use crate::rng::Stream;
use crate::targets::{
    sample_dataset, AnalyticId, AnalyticTarget, ConstantTarget, Dataset, SampleBox, APPENDIX_HOLE,
};

use super::config::ExperimentConfig;
use super::record::{TrialRecord, TrialStatus};
use super::results::{emit_results, write_manifest};

const APPENDIX_STREAM: u64 = 0x6170_7065_6e64;
const APPENDIX_SHUFFLE: u64 = 0x6170_7368_7566;

fn id_index(id: AnalyticId) -> u64 {
    match id {
        AnalyticId::A => 0,
        AnalyticId::B => 1,
        AnalyticId::C => 2,
        AnalyticId::D => 3,
    }
}

/// One Task 1 training segment at fixed `(r, M)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub r: u32,
    #[serde(rename = "M")]
    pub m: usize,
    pub curve: TrainCurve,
    /// Validation MAE at the end of the segment.
    pub end_validation_mae: f64,
    /// Validation MAE right after expanding, before any further step.
    pub expanded_validation_mae: Option<f64>,
}

impl Segment {
    pub fn boundary_jump(&self) -> Option<f64> {
        self.expanded_validation_mae
            .map(|after| (after - self.end_validation_mae).abs())
    }
}

/// Task 2 test MAE split by whether the point lies in the zeroed box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoleSplit {
    pub inside: Option<f64>,
    pub outside: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct AppendixRun {
    pub experiment: AnalyticId,
    pub record: TrialRecord,
    pub segments: Vec<Segment>,
    /// Model after each Task 1 segment, then after Task 2.
    pub snapshots: Vec<AtlasModel>,
    pub before_task2: HoleSplit,
    pub after_task2: HoleSplit,
}

fn in_hole(x: &[f64]) -> bool {
    let (lo, hi) = APPENDIX_HOLE;
    x.iter().all(|&v| lo < v && v < hi)
}

fn hole_split(model: &AtlasModel, data: &Dataset) -> Result<HoleSplit> {
    let mut sums = [0.0; 2];
    let mut counts = [0usize; 2];
    for (x, y) in data.iter() {
        let k = usize::from(!in_hole(x));
        let out = model.forward(x)?;
        sums[k] += out.iter().zip(y).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64;
        counts[k] += 1;
    }
    let avg = |k: usize| (counts[k] > 0).then(|| sums[k] / counts[k] as f64);
    Ok(HoleSplit {
        inside: avg(0),
        outside: avg(1),
    })
}

/// Runs the train-expand protocol for one target.
///
/// Starts from a zero model with `r = 0, M = 0`, trains Task 1 in
/// `segments` segments and expands `r` by one and `M` by `delta_m` between
/// consecutive segments, then trains Task 2 on zero targets inside
/// `[0.45, 0.55]^2`. The Task 1 test set doubles as validation set.
pub fn run_appendix(config: &ExperimentConfig, id: AnalyticId) -> Result<AppendixRun> {
    config.validate()?;
    let settings = config.appendix;
    let started = Instant::now();
    let mut rng = Stream::substream(config.master_seed, &[APPENDIX_STREAM, id_index(id)]);
    let mut shuffle = Stream::substream(config.master_seed, &[APPENDIX_SHUFFLE, id_index(id)]);
    let sigma = settings.noise_sigma;
    let count = config.points_per_split;
    let unit = SampleBox::unit(2);
    let task1 = AnalyticTarget {
        id,
        theta: config.expa_theta,
        hole: false,
    };
    let task2 = AnalyticTarget {
        hole: true,
        ..task1
    };
    let task1_train = sample_dataset(&task1, count, &unit, sigma, &mut rng)?;
    let task1_test = sample_dataset(&task1, count, &unit, sigma, &mut rng)?;
    let hole_box = SampleBox::cube(2, APPENDIX_HOLE.0, APPENDIX_HOLE.1);
    let zero = ConstantTarget { n: 2, value: 0.0 };
    let task2_train = sample_dataset(&zero, count, &hole_box, sigma, &mut rng)?;
    let task2_test = sample_dataset(&task2, count, &unit, sigma, &mut rng)?;

    let train = |epochs| TrainConfig {
        epochs,
        batch_size: config.batch_size,
        lr: settings.lr,
        adam_mode: config.adam_mode,
    };
    let mut model = AtlasModel::new(2, 1, 0, 0, Variant::DistalOrthogonal)?;
    let mut segments = Vec::with_capacity(settings.segments);
    let mut snapshots = Vec::with_capacity(settings.segments + 1);
    let mut task1_curve = TrainCurve::default();
    for s in 0..settings.segments {
        let curve = train_epochs(
            &mut model,
            &task1_train,
            &task1_test,
            &train(settings.segment_epochs),
            &mut shuffle,
        )?;
        let end = dataset_mae(&model, &task1_test)?;
        let (r, m) = (model.r(), model.m());
        snapshots.push(model.clone());
        let expanded = if s + 1 < settings.segments {
            model.expand_density_all();
            model.expand_exponentials(settings.delta_m);
            Some(dataset_mae(&model, &task1_test)?)
        } else {
            None
        };
        task1_curve.train.extend_from_slice(&curve.train);
        task1_curve.validation.extend_from_slice(&curve.validation);
        segments.push(Segment {
            r,
            m,
            curve,
            end_validation_mae: end,
            expanded_validation_mae: expanded,
        });
    }
    let task1_test_mae = dataset_mae(&model, &task1_test)?;
    let before_task2 = hole_split(&model, &task2_test)?;
    let task2_curve = train_epochs(
        &mut model,
        &task2_train,
        &task2_test,
        &train(settings.task2_epochs),
        &mut shuffle,
    )?;
    let task2_test_mae = dataset_mae(&model, &task2_test)?;
    let after_task2 = hole_split(&model, &task2_test)?;
    let task1_after = dataset_mae(&model, &task1_test)?;
    snapshots.push(model);

    let record = TrialRecord {
        trial_id: format!("appendix_{id}"),
        trial_index: 0,
        n: 2,
        delta: APPENDIX_HOLE.1 - APPENDIX_HOLE.0,
        lr: settings.lr,
        noise: sigma,
        variant: Variant::DistalOrthogonal,
        seed: config.master_seed,
        task1: task1_curve,
        task2: task2_curve,
        task1_test_mae: Some(task1_test_mae),
        task2_test_mae: Some(task2_test_mae),
        task1_test_mae_after_task2: Some(task1_after),
        status: TrialStatus::Completed,
        wall_clock_s: started.elapsed().as_secs_f64(),
    };
    Ok(AppendixRun {
        experiment: id,
        record,
        segments,
        snapshots,
        before_task2,
        after_task2,
    })
}

#[derive(Serialize)]
struct AppendixSummary<'a> {
    experiment: AnalyticId,
    segments: &'a [Segment],
    before_task2: HoleSplit,
    after_task2: HoleSplit,
    record: &'a TrialRecord,
}

/// Writes results, manifest, a JSON summary and one model file per snapshot.
pub fn write_appendix(run: &AppendixRun, config: &ExperimentConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    emit_results(std::slice::from_ref(&run.record), dir)?;
    write_manifest(dir, config, Some(1))?;
    let summary = AppendixSummary {
        experiment: run.experiment,
        segments: &run.segments,
        before_task2: run.before_task2,
        after_task2: run.after_task2,
        record: &run.record,
    };
    fs::write(
        dir.join("appendix.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    let last = run.snapshots.len().saturating_sub(1);
    for (i, model) in run.snapshots.iter().enumerate() {
        let name = if i == last {
            "model_task2.json".to_string()
        } else {
            format!("model_segment{}.json", i + 1)
        };
        model_file::save(model, dir.join(name))?;
    }
    Ok(())
}
