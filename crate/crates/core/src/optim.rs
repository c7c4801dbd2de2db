//! MAE loss and Adam-driven mini-batch training.

use serde::{Deserialize, Serialize};

use crate::error::{AtlasError, Result};
use crate::model::AtlasModel;
use crate::rng::Stream;
use crate::sparse::SparseGradient;
use crate::targets::Dataset;

/// Mean absolute error over samples and output components.
pub fn mae(pred: &[Vec<f64>], target: &[Vec<f64>]) -> Result<f64> {
    if pred.is_empty() {
        return Err(AtlasError::invalid("MAE of an empty batch"));
    }
    if pred.len() != target.len() {
        return Err(AtlasError::Shape {
            what: "MAE batch",
            expected: pred.len(),
            actual: target.len(),
        });
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (p, t) in pred.iter().zip(target) {
        if p.len() != t.len() {
            return Err(AtlasError::Shape {
                what: "MAE sample",
                expected: p.len(),
                actual: t.len(),
            });
        }
        total += p.iter().zip(t).map(|(a, b)| (a - b).abs()).sum::<f64>();
        count += p.len();
    }
    Ok(total / count as f64)
}

/// Subgradient of the batch MAE with respect to one sample's prediction:
/// `sign(pred - target) / (batch_size * p)` with `sign(0) = 0`.
pub fn mae_upstream(pred: &[f64], target: &[f64], batch_size: usize) -> Vec<f64> {
    let scale = 1.0 / (batch_size.max(1) * pred.len()) as f64;
    pred.iter()
        .zip(target)
        .map(|(a, b)| {
            let d = a - b;
            if d > 0.0 {
                scale
            } else if d < 0.0 {
                -scale
            } else {
                0.0
            }
        })
        .collect()
}

/// MAE of the model over a whole dataset.
pub fn dataset_mae(model: &AtlasModel, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(AtlasError::invalid("MAE of an empty dataset"));
    }
    let mut total = 0.0;
    for (x, y) in data.iter() {
        let pred = model.forward(x)?;
        total += pred.iter().zip(y).map(|(a, b)| (a - b).abs()).sum::<f64>();
    }
    Ok(total / (data.len() * data.p()) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Whether untouched parameters take an Adam step (with zero gradient) every iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdamMode {
    #[default]
    Dense,
    /// Only parameters touched by the batch gradient update; moments of the rest are left alone.
    Lazy,
}

impl std::str::FromStr for AdamMode {
    type Err = AtlasError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(AdamMode::Dense),
            "lazy" => Ok(AdamMode::Lazy),
            _ => Err(AtlasError::invalid(format!("unknown adam mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub hyper: AdamConfig,
    pub mode: AdamMode,
}

impl AdamState {
    pub fn new(model: &AtlasModel, hyper: AdamConfig, mode: AdamMode) -> Self {
        let size = model.count_trainable();
        Self {
            m: vec![0.0; size],
            v: vec![0.0; size],
            t: 0,
            hyper,
            mode,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    /// One Adam step from an accumulated sparse gradient.
    pub fn step(&mut self, model: &mut AtlasModel, grad: &SparseGradient) -> Result<()> {
        let mut dense = vec![0.0; self.len()];
        let mut touched = vec![false; self.len()];
        for &(i, g) in grad.entries() {
            if i >= dense.len() {
                return Err(AtlasError::Shape {
                    what: "gradient index",
                    expected: dense.len(),
                    actual: i,
                });
            }
            dense[i] += g;
            touched[i] = true;
        }
        self.step_dense(model, &dense, Some(&touched))
    }

    /// One Adam step from a dense gradient. `touched` is consulted in lazy mode only.
    pub fn step_dense(
        &mut self,
        model: &mut AtlasModel,
        grad: &[f64],
        touched: Option<&[bool]>,
    ) -> Result<()> {
        let size = model.count_trainable();
        if self.m.len() != size || grad.len() != size {
            return Err(AtlasError::Shape {
                what: "optimizer state",
                expected: size,
                actual: if self.m.len() != size {
                    self.m.len()
                } else {
                    grad.len()
                },
            });
        }
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.hyper;
        let t = self.t as i32;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);
        let lazy = self.mode == AdamMode::Lazy;
        for (i, param) in model.trainable_params_mut().enumerate() {
            if lazy && !touched.map_or(grad[i] != 0.0, |t| t[i]) {
                continue;
            }
            let g = grad[i];
            let m = beta1 * self.m[i] + (1.0 - beta1) * g;
            let v = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            self.m[i] = m;
            self.v[i] = v;
            let m_hat = m / bias1;
            let v_hat = v / bias2;
            *param -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub adam_mode: AdamMode,
}

/// Per-epoch MAE on the training and validation splits, measured after each epoch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainCurve {
    pub train: Vec<f64>,
    pub validation: Vec<f64>,
}

/// Mini-batch training with a fresh Adam state.
///
/// Each epoch shuffles the training indices with `rng`, then for every batch
/// sums the per-sample sparse gradients weighted by the MAE subgradient and
/// takes one optimizer step.
pub fn train_epochs(
    model: &mut AtlasModel,
    train: &Dataset,
    validation: &Dataset,
    config: &TrainConfig,
    rng: &mut Stream,
) -> Result<TrainCurve> {
    if train.is_empty() {
        return Err(AtlasError::invalid("training set is empty"));
    }
    if config.batch_size == 0 {
        return Err(AtlasError::invalid("batch size must be at least 1"));
    }
    if train.n() != model.n() || train.p() != model.p() {
        return Err(AtlasError::invalid(
            "training set shape does not match the model",
        ));
    }
    let mut curve = TrainCurve::default();
    if config.epochs == 0 {
        return Ok(curve);
    }
    let mut adam = AdamState::new(model, AdamConfig::with_lr(config.lr), config.adam_mode);
    let size = model.count_trainable();
    let mut grad = vec![0.0; size];
    let mut touched = vec![false; size];
    let lazy = config.adam_mode == AdamMode::Lazy;
    let mut order: Vec<usize> = Vec::with_capacity(train.len());

    for _ in 0..config.epochs {
        order.clear();
        order.extend(0..train.len());
        rng.shuffle(&mut order);
        for batch in order.chunks(config.batch_size) {
            grad.fill(0.0);
            if lazy {
                touched.fill(false);
            }
            for &i in batch {
                let trace = model.trace(train.input(i))?;
                let upstream = mae_upstream(trace.outputs(), train.target(i), batch.len());
                trace.accumulate(
                    model,
                    &upstream,
                    &mut grad,
                    if lazy { Some(&mut touched) } else { None },
                );
            }
            adam.step_dense(model, &grad, lazy.then_some(&touched[..]))?;
        }
        curve.train.push(dataset_mae(model, train)?);
        curve.validation.push(dataset_mae(model, validation)?);
    }
    Ok(curve)
}
