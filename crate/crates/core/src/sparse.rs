//! Sparse parameter gradients keyed by flat trainable-parameter index.

use serde::{Deserialize, Serialize};

/// `(flat_param_index, partial)` pairs with strictly increasing indices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseGradient {
    entries: Vec<(usize, f64)>,
}

impl SparseGradient {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(cap: usize) -> Self {
        Self {
            entries: Vec::with_capacity(cap),
        }
    }

    /// Builds from arbitrary pairs, summing duplicates and sorting by index.
    pub fn from_pairs(mut pairs: Vec<(usize, f64)>) -> Self {
        pairs.sort_by_key(|&(i, _)| i);
        let mut entries: Vec<(usize, f64)> = Vec::with_capacity(pairs.len());
        for (i, v) in pairs {
            match entries.last_mut() {
                Some(last) if last.0 == i => last.1 += v,
                _ => entries.push((i, v)),
            }
        }
        Self { entries }
    }

    /// Appends an entry. Panics in debug builds if `index` does not exceed the last one.
    pub(crate) fn push(&mut self, index: usize, value: f64) {
        debug_assert!(self.entries.last().is_none_or(|&(i, _)| i < index));
        self.entries.push((index, value));
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of entries whose value is not exactly zero.
    pub fn nnz(&self) -> usize {
        self.entries.iter().filter(|(_, v)| *v != 0.0).count()
    }

    pub fn l1_norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v.abs()).sum()
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum()
    }

    pub fn get(&self, index: usize) -> Option<f64> {
        self.entries
            .binary_search_by_key(&index, |&(i, _)| i)
            .ok()
            .map(|pos| self.entries[pos].1)
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, v) in &mut self.entries {
            *v *= factor;
        }
    }

    /// Shifts every index by `offset`.
    pub fn offset(mut self, offset: usize) -> Self {
        for (i, _) in &mut self.entries {
            *i += offset;
        }
        self
    }

    /// Merges two gradients, adding values that share an index.
    pub fn merge(&self, other: &SparseGradient) -> SparseGradient {
        let (a, b) = (&self.entries, &other.entries);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut p, mut q) = (0, 0);
        while p < a.len() && q < b.len() {
            match a[p].0.cmp(&b[q].0) {
                std::cmp::Ordering::Less => {
                    out.push(a[p]);
                    p += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(b[q]);
                    q += 1;
                }
                std::cmp::Ordering::Equal => {
                    out.push((a[p].0, a[p].1 + b[q].1));
                    p += 1;
                    q += 1;
                }
            }
        }
        out.extend_from_slice(&a[p..]);
        out.extend_from_slice(&b[q..]);
        SparseGradient { entries: out }
    }

    /// Inner product by index merge. Disjoint index sets give exactly `0.0`.
    pub fn dot(&self, other: &SparseGradient) -> f64 {
        let (a, b) = (&self.entries, &other.entries);
        let (mut p, mut q) = (0, 0);
        let mut acc = 0.0;
        while p < a.len() && q < b.len() {
            match a[p].0.cmp(&b[q].0) {
                std::cmp::Ordering::Less => p += 1,
                std::cmp::Ordering::Greater => q += 1,
                std::cmp::Ordering::Equal => {
                    acc += a[p].1 * b[q].1;
                    p += 1;
                    q += 1;
                }
            }
        }
        acc
    }

    /// Adds every entry into a dense buffer.
    pub fn scatter_add(&self, dense: &mut [f64]) {
        for &(i, v) in &self.entries {
            dense[i] += v;
        }
    }

    pub fn is_strictly_increasing(&self) -> bool {
        self.entries.windows(2).all(|w| w[0].0 < w[1].0)
    }
}
