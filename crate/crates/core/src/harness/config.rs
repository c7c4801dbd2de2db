use serde::{Deserialize, Serialize};

use crate::error::{AtlasError, Result};
use crate::optim::AdamMode;
use crate::rng::Stream;
use crate::targets::{ThetaMode, RBF_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Grid,
    Appendix,
}

/// How each trial picks its learning rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LrMode {
    RandomUniform { lo: f64, hi: f64 },
    Fixed { value: f64 },
}

impl LrMode {
    pub fn default_range() -> Self {
        LrMode::RandomUniform {
            lo: 1e-6,
            hi: 0.01 + 1e-6,
        }
    }

    pub fn draw(&self, rng: &mut Stream) -> f64 {
        match *self {
            LrMode::RandomUniform { lo, hi } => rng.uniform_in(lo, hi),
            LrMode::Fixed { value } => value,
        }
    }
}

/// How each trial picks the training-noise standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NoiseMode {
    Exponential { mean: f64 },
    Fixed { sigma: f64 },
}

impl NoiseMode {
    pub fn draw(&self, rng: &mut Stream) -> f64 {
        match *self {
            NoiseMode::Exponential { mean } => rng.exponential(mean),
            NoiseMode::Fixed { sigma } => sigma,
        }
    }
}

/// Settings specific to the train-expand protocol on the analytic targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AppendixSettings {
    /// Task 1 training segments; the model is expanded between consecutive segments.
    pub segments: usize,
    pub segment_epochs: usize,
    pub task2_epochs: usize,
    pub lr: f64,
    /// Noise added to training and test targets.
    pub noise_sigma: f64,
    pub delta_m: usize,
}

impl Default for AppendixSettings {
    fn default() -> Self {
        Self {
            segments: 5,
            segment_epochs: 30,
            task2_epochs: 6,
            lr: 0.01,
            noise_sigma: 0.1,
            delta_m: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub protocol: Protocol,
    pub dims: Vec<usize>,
    pub widths: Vec<f64>,
    pub trials: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub r: u32,
    pub batch_size: usize,
    pub epochs_task1: usize,
    pub epochs_task2: usize,
    pub lr_mode: LrMode,
    pub noise_mode: NoiseMode,
    pub master_seed: u64,
    #[serde(rename = "expA_theta")]
    pub expa_theta: ThetaMode,
    pub adam_mode: AdamMode,
    /// Points in every train/validation/test split.
    pub points_per_split: usize,
    pub rbf_count: usize,
    pub appendix: AppendixSettings,
    /// Worker threads for trials; 0 lets the pool decide.
    #[serde(default)]
    pub workers: usize,
}

/// Update-region widths 0.1, 0.2, ..., 0.9.
pub fn default_widths() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

impl Default for ExperimentConfig {
    /// Reduced grid: dims {1, 2}, five trials per cell.
    fn default() -> Self {
        Self {
            protocol: Protocol::Grid,
            dims: vec![1, 2],
            widths: default_widths(),
            trials: 5,
            m: 10,
            r: 4,
            batch_size: 100,
            epochs_task1: 20,
            epochs_task2: 10,
            lr_mode: LrMode::default_range(),
            noise_mode: NoiseMode::Exponential { mean: 1.0 },
            master_seed: 0,
            expa_theta: ThetaMode::AsWritten,
            adam_mode: AdamMode::Dense,
            points_per_split: 10_000,
            rbf_count: RBF_COUNT,
            appendix: AppendixSettings::default(),
            workers: 0,
        }
    }
}

impl ExperimentConfig {
    /// Full grid: dims {1, 2, 8}, nine widths, thirty trials.
    pub fn full() -> Self {
        Self {
            dims: vec![1, 2, 8],
            trials: 30,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(AtlasError::invalid("trials must be at least 1"));
        }
        if self.dims.is_empty() || self.dims.contains(&0) {
            return Err(AtlasError::invalid(
                "dims must be a nonempty list of positive integers",
            ));
        }
        if self.widths.is_empty() || self.widths.iter().any(|&w| !(w > 0.0 && w < 1.0)) {
            return Err(AtlasError::invalid("widths must lie in (0, 1)"));
        }
        if self.batch_size == 0 || self.points_per_split == 0 || self.rbf_count == 0 {
            return Err(AtlasError::invalid(
                "batch size, split size and RBF count must be positive",
            ));
        }
        if let LrMode::RandomUniform { lo, hi } = self.lr_mode {
            if !(hi > lo && lo > 0.0) {
                return Err(AtlasError::invalid(
                    "learning-rate range must satisfy 0 < lo < hi",
                ));
            }
        }
        if let NoiseMode::Fixed { sigma } = self.noise_mode {
            if !(sigma >= 0.0) {
                return Err(AtlasError::invalid("noise sigma must be non-negative"));
            }
        }
        if self.appendix.segments == 0 {
            return Err(AtlasError::invalid("appendix needs at least one segment"));
        }
        Ok(())
    }

    /// Number of records a complete grid run produces.
    pub fn expected_records(&self) -> usize {
        self.dims.len() * self.widths.len() * self.trials * 2
    }
}
