use serde::{Deserialize, Serialize};

use crate::model::Variant;
use crate::optim::TrainCurve;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "state")]
pub enum TrialStatus {
    Completed,
    Failed { message: String },
}

/// One model's run through Task 1 then Task 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    /// Identifies the `(n, delta, trial_index)` cell; shared by both variants of a trial.
    pub trial_id: String,
    pub trial_index: usize,
    pub n: usize,
    pub delta: f64,
    pub lr: f64,
    pub noise: f64,
    pub variant: Variant,
    /// Master seed the trial streams were derived from.
    pub seed: u64,
    pub task1: TrainCurve,
    pub task2: TrainCurve,
    /// Task 1 test MAE right after Task 1 training.
    pub task1_test_mae: Option<f64>,
    /// Task 2 test MAE after Task 2 training.
    pub task2_test_mae: Option<f64>,
    /// Task 1 test MAE after Task 2 training.
    pub task1_test_mae_after_task2: Option<f64>,
    pub status: TrialStatus,
    pub wall_clock_s: f64,
}

impl TrialRecord {
    /// Key used to skip already completed work on resume.
    pub fn key(&self) -> (String, Variant) {
        (self.trial_id.clone(), self.variant)
    }

    pub fn is_completed(&self) -> bool {
        self.status == TrialStatus::Completed
    }

    /// Task 2 test MAE minus Task 1 test MAE.
    pub fn degradation(&self) -> Option<f64> {
        Some(self.task2_test_mae? - self.task1_test_mae?)
    }
}

pub fn trial_id(n: usize, delta: f64, trial_index: usize) -> String {
    format!("n{n}_d{delta}_t{trial_index}")
}
