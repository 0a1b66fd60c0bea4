//! mRMR feature selection on three-state discretized features.
//!
//! Continuous features are coded as -1 / 0 / +1 depending on whether they
//! fall below, within, or above `mean ± sigma * std`. Selection is greedy:
//! the first feature maximizes I(f; c); each later one maximizes
//! I(f; c) minus the mean of I(f; s) over the already-selected s.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::texture::UNIFORM_BINS;

#[derive(Debug, Error, PartialEq)]
pub enum SelectionError {
    #[error("cannot select {count} of {available} features")]
    CountOutOfRange { count: usize, available: usize },
    #[error("feature index {index} is outside {filters} filter blocks")]
    IndexOutOfRange { index: usize, filters: usize },
    #[error("{rows} rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("labels must be +1 or -1, found {0}")]
    BadLabel(i8),
    #[error("need at least 3 filters, got {0}")]
    TooFewFilters(usize),
}

/// Per-feature (mean, std) used for the three-state coding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub sigma: f64,
}

impl Thresholds {
    /// Population mean and std of each column.
    pub fn fit(features: &Array2<f64>, sigma: f64) -> Self {
        let m = features.nrows().max(1) as f64;
        let mut mean = Vec::with_capacity(features.ncols());
        let mut std = Vec::with_capacity(features.ncols());
        for col in features.columns() {
            let mu = col.sum() / m;
            let var = col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / m;
            let (lo, hi) = col
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
            mean.push(mu);
            std.push(if lo == hi { 0.0 } else { var.sqrt() });
        }
        Self { mean, std, sigma }
    }

    /// Codes rows with these thresholds; constant training columns map to 0.
    pub fn apply(&self, features: &Array2<f64>) -> Array2<i8> {
        Array2::from_shape_fn(features.raw_dim(), |(i, j)| {
            let (mu, sd) = (self.mean[j], self.std[j]);
            if sd == 0.0 {
                return 0;
            }
            let v = features[[i, j]];
            if v > mu + self.sigma * sd {
                1
            } else if v < mu - self.sigma * sd {
                -1
            } else {
                0
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizedSet {
    /// M x d states in {-1, 0, +1}.
    pub states: Array2<i8>,
    pub thresholds: Thresholds,
}

pub fn discretize(features: &Array2<f64>, sigma: f64) -> DiscretizedSet {
    let thresholds = Thresholds::fit(features, sigma);
    DiscretizedSet {
        states: thresholds.apply(features),
        thresholds,
    }
}

/// Plug-in mutual information in nats between two discrete columns.
pub fn mutual_information<A, B>(a: &[A], b: &[B]) -> f64
where
    A: Ord + Copy,
    B: Ord + Copy,
{
    assert_eq!(a.len(), b.len(), "columns must have equal length");
    let n = a.len() as f64;
    if a.is_empty() {
        return 0.0;
    }
    let mut joint: BTreeMap<(A, B), usize> = BTreeMap::new();
    let mut pa: BTreeMap<A, usize> = BTreeMap::new();
    let mut pb: BTreeMap<B, usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1;
        *pa.entry(x).or_default() += 1;
        *pb.entry(y).or_default() += 1;
    }
    let mi: f64 = joint
        .iter()
        .map(|(&(x, y), &c)| {
            let pxy = c as f64 / n;
            pxy * (c as f64 * n / (pa[&x] as f64 * pb[&y] as f64)).ln()
        })
        .sum();
    mi.max(0.0)
}

/// [`mutual_information`] specialized to values in {-1, 0, +1}; same
/// summation order, so results are bitwise equal.
fn mi_states(a: &[i8], b: &[i8]) -> f64 {
    let n = a.len() as f64;
    if a.is_empty() {
        return 0.0;
    }
    let mut joint = [[0usize; 3]; 3];
    for (&x, &y) in a.iter().zip(b) {
        joint[(x + 1) as usize][(y + 1) as usize] += 1;
    }
    let pa: Vec<usize> = joint.iter().map(|r| r.iter().sum()).collect();
    let pb: Vec<usize> = (0..3).map(|j| joint.iter().map(|r| r[j]).sum()).collect();
    let mut mi = 0.0;
    for (x, row) in joint.iter().enumerate() {
        for (y, &c) in row.iter().enumerate() {
            if c > 0 {
                let pxy = c as f64 / n;
                mi += pxy * (c as f64 * n / (pa[x] as f64 * pb[y] as f64)).ln();
            }
        }
    }
    mi.max(0.0)
}

/// Plug-in entropy in nats.
pub fn entropy<A: Ord + Copy>(a: &[A]) -> f64 {
    let n = a.len() as f64;
    let mut counts: BTreeMap<A, usize> = BTreeMap::new();
    for &x in a {
        *counts.entry(x).or_default() += 1;
    }
    -counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Feature indices in selection order.
    pub selected: Vec<usize>,
    /// Greedy objective of each pick.
    pub scores: Vec<f64>,
    /// Filled by [`SelectionResult::with_filter_counts`].
    #[serde(default)]
    pub per_filter_counts: Vec<usize>,
}

impl SelectionResult {
    pub fn with_filter_counts(mut self, n_filters: usize) -> Result<Self, SelectionError> {
        self.per_filter_counts = per_filter_counts(&self.selected, n_filters)?;
        Ok(self)
    }

    /// First `count` picks; greedy selection makes this equal to a fresh
    /// run with the smaller count.
    pub fn prefix(&self, count: usize) -> &[usize] {
        &self.selected[..count.min(self.selected.len())]
    }
}

/// Greedy mRMR (difference form). Ties go to the lower feature index.
pub fn mrmr_select(data: &DiscretizedSet, labels: &[i8], count: usize) -> Result<SelectionResult, SelectionError> {
    let (rows, d) = data.states.dim();
    if rows != labels.len() {
        return Err(SelectionError::LengthMismatch {
            rows,
            labels: labels.len(),
        });
    }
    if count == 0 || count > d {
        return Err(SelectionError::CountOutOfRange { count, available: d });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l != 1 && l != -1) {
        return Err(SelectionError::BadLabel(bad));
    }
    let columns: Vec<Vec<i8>> = data.states.columns().into_iter().map(|c| c.to_vec()).collect();
    let relevance: Vec<f64> = columns.iter().map(|c| mi_states(c, labels)).collect();
    let mut redundancy = vec![0.0; d];
    let mut chosen = vec![false; d];
    let mut result = SelectionResult {
        selected: Vec::with_capacity(count),
        scores: Vec::with_capacity(count),
        per_filter_counts: Vec::new(),
    };
    for step in 0..count {
        let mut best = usize::MAX;
        let mut best_score = f64::NEG_INFINITY;
        for f in 0..d {
            if chosen[f] {
                continue;
            }
            let score = if step == 0 {
                relevance[f]
            } else {
                relevance[f] - redundancy[f] / step as f64
            };
            if score > best_score {
                best_score = score;
                best = f;
            }
        }
        chosen[best] = true;
        result.selected.push(best);
        result.scores.push(best_score);
        if step + 1 < count {
            for f in 0..d {
                if !chosen[f] {
                    redundancy[f] += mi_states(&columns[f], &columns[best]);
                }
            }
        }
    }
    Ok(result)
}

/// Selected features per LBP filter block. Entry `i` counts filter `i + 2`
/// in 1-based filter numbering (the first and last filters have no block).
pub fn per_filter_counts(selected: &[usize], n_filters: usize) -> Result<Vec<usize>, SelectionError> {
    if n_filters < 3 {
        return Err(SelectionError::TooFewFilters(n_filters));
    }
    let blocks = n_filters - 2;
    let mut counts = vec![0; blocks];
    for &index in selected {
        let block = index / UNIFORM_BINS;
        if block >= blocks {
            return Err(SelectionError::IndexOutOfRange {
                index,
                filters: n_filters,
            });
        }
        counts[block] += 1;
    }
    Ok(counts)
}
