//! Aggregates computed purely from trial records.

use serde::{Deserialize, Serialize};

use crate::model::Variant;

use super::record::TrialRecord;

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Mean final metrics of completed trials for one `(n, delta, variant)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub n: usize,
    pub delta: f64,
    pub variant: Variant,
    pub completed: usize,
    pub failed: usize,
    pub mean_task1_test_mae: Option<f64>,
    pub mean_task2_test_mae: Option<f64>,
    pub mean_task1_test_mae_after_task2: Option<f64>,
    /// Mean of `task2_test_mae - task1_test_mae`.
    pub mean_degradation: Option<f64>,
}

/// Groups records by `(n, delta, variant)` in first-appearance order.
pub fn aggregate(records: &[TrialRecord]) -> Vec<SummaryRow> {
    let mut keys: Vec<(usize, u64, Variant)> = Vec::new();
    for rec in records {
        let key = (rec.n, rec.delta.to_bits(), rec.variant);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(n, bits, variant)| {
            let cell: Vec<&TrialRecord> = records
                .iter()
                .filter(|r| r.n == n && r.delta.to_bits() == bits && r.variant == variant)
                .collect();
            let done: Vec<&TrialRecord> =
                cell.iter().copied().filter(|r| r.is_completed()).collect();
            let collect = |f: &dyn Fn(&TrialRecord) -> Option<f64>| -> Option<f64> {
                mean(&done.iter().filter_map(|r| f(r)).collect::<Vec<_>>())
            };
            SummaryRow {
                n,
                delta: f64::from_bits(bits),
                variant,
                completed: done.len(),
                failed: cell.len() - done.len(),
                mean_task1_test_mae: collect(&|r| r.task1_test_mae),
                mean_task2_test_mae: collect(&|r| r.task2_test_mae),
                mean_task1_test_mae_after_task2: collect(&|r| r.task1_test_mae_after_task2),
                mean_degradation: collect(&|r| r.degradation()),
            }
        })
        .collect()
}

/// Average ranks (1-based), ties sharing the mean of their positions.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            out[idx] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation: Pearson correlation of the average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let mx = mean(&rx)?;
    let my = mean(&ry)?;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx).powi(2);
        vy += (b - my).powi(2);
    }
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}
