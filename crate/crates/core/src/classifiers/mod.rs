//! Binary classifiers over fixed-length feature vectors.
//!
//! Labels are `+1` (abnormal) and `-1` (normal) throughout.

pub mod kernel;
pub mod knn;
pub mod mlp;
pub mod svm;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use kernel::{gram_matrix, kernel_eval, KernelKind, KernelSpec};
pub use knn::{knn_predict, KnnModel};
pub use mlp::{mlp_predict, mlp_train, MlpConfig, MlpModel};
pub use svm::{svm_predict, svm_train, SvmConfig, SvmModel};

#[derive(Debug, Error, PartialEq)]
pub enum ClassifierError {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{kernel} kernel requires non-negative inputs (found {value})")]
    NegativeInput { kernel: KernelKind, value: f64 },
    #[error("{0} kernel matrix is not positive semi-definite (negative curvature in SMO update)")]
    NotPsd(KernelKind),
    #[error("kernel matrix is not positive semi-definite")]
    IndefiniteGram,
    #[error("SMO did not converge within {0} iterations")]
    NotConverged(usize),
    #[error("training data must contain both classes")]
    SingleClass,
    #[error("labels must be +1 or -1, found {0}")]
    BadLabel(i8),
    #[error("labeled set is inconsistent: {0}")]
    Inconsistent(String),
    #[error("empty training store")]
    EmptyStore,
    #[error("k must be odd and between 1 and {max}, got {k}")]
    BadK { k: usize, max: usize },
    #[error("invalid parameter: {0}")]
    BadParameter(String),
}

/// Feature matrix with ±1 labels and row identifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSet {
    pub features: Array2<f64>,
    pub labels: Vec<i8>,
    pub ids: Vec<String>,
}

impl LabeledSet {
    pub fn new(features: Array2<f64>, labels: Vec<i8>, ids: Vec<String>) -> Result<Self, ClassifierError> {
        if features.nrows() != labels.len() || labels.len() != ids.len() {
            return Err(ClassifierError::Inconsistent(format!(
                "{} rows, {} labels, {} ids",
                features.nrows(),
                labels.len(),
                ids.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l != 1 && l != -1) {
            return Err(ClassifierError::BadLabel(bad));
        }
        Ok(Self {
            features,
            labels,
            ids,
        })
    }

    /// Builds a set from rows, naming them by position.
    pub fn from_rows(rows: &[Vec<f64>], labels: &[i8]) -> Result<Self, ClassifierError> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != d) {
            return Err(ClassifierError::DimensionMismatch {
                expected: d,
                found: r.len(),
            });
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let features = Array2::from_shape_vec((rows.len(), d), flat)
            .map_err(|e| ClassifierError::Inconsistent(e.to_string()))?;
        let ids = (0..rows.len()).map(|i| i.to_string()).collect();
        Self::new(features, labels.to_vec(), ids)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn has_both_classes(&self) -> bool {
        self.labels.contains(&1) && self.labels.contains(&-1)
    }

    /// Subset of rows in the given order.
    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            features: self.features.select(ndarray::Axis(0), rows),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            ids: rows.iter().map(|&r| self.ids[r].clone()).collect(),
        }
    }

    /// Same rows restricted to the given feature columns.
    pub fn select_features(&self, columns: &[usize]) -> Self {
        Self {
            features: self.features.select(ndarray::Axis(1), columns),
            labels: self.labels.clone(),
            ids: self.ids.clone(),
        }
    }

    /// Copy with every label negated.
    pub fn flipped(&self) -> Self {
        Self {
            labels: self.labels.iter().map(|l| -l).collect(),
            ..self.clone()
        }
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<(), ClassifierError> {
    if expected != found {
        return Err(ClassifierError::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Any trained back-end; serialized with a `type` tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum TrainedModel {
    Knn(KnnModel),
    Svm(SvmModel),
    Mlp(MlpModel),
}

impl TrainedModel {
    /// Predicted label and a real-valued score (higher means more abnormal).
    pub fn predict(&self, x: &[f64]) -> Result<(i8, f64), ClassifierError> {
        match self {
            TrainedModel::Knn(m) => {
                let (label, neighbors) = knn_predict(m, x)?;
                let votes = neighbors.iter().filter(|&&i| m.store.labels[i] == 1).count();
                Ok((label, votes as f64 / neighbors.len() as f64))
            }
            TrainedModel::Svm(m) => svm_predict(m, x),
            TrainedModel::Mlp(m) => mlp_predict(m, x),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("models serialize")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labeled_set_validation() {
        assert!(matches!(
            LabeledSet::from_rows(&[vec![1.0], vec![2.0, 3.0]], &[1, -1]),
            Err(ClassifierError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            LabeledSet::from_rows(&[vec![1.0], vec![2.0]], &[1, 0]),
            Err(ClassifierError::BadLabel(0))
        ));
        let s = LabeledSet::from_rows(&[vec![1.0], vec![2.0]], &[1, -1]).unwrap();
        assert!(s.has_both_classes());
        assert_eq!(s.flipped().labels, vec![-1, 1]);
        assert_eq!(s.select(&[1]).features[[0, 0]], 2.0);
    }
}
