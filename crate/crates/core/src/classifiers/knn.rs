use serde::{Deserialize, Serialize};

use super::{check_dim, ClassifierError, LabeledSet};

/// Exact Euclidean k-nearest-neighbor vote over the stored rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub store: LabeledSet,
    pub k: usize,
}

impl KnnModel {
    pub fn new(store: LabeledSet, k: usize) -> Result<Self, ClassifierError> {
        if store.is_empty() {
            return Err(ClassifierError::EmptyStore);
        }
        if k == 0 || k % 2 == 0 || k > store.len() {
            return Err(ClassifierError::BadK {
                k,
                max: store.len(),
            });
        }
        Ok(Self { store, k })
    }
}

/// Majority label of the k closest rows and their indices, nearest first.
/// Equal distances resolve to the lower row index.
pub fn knn_predict(model: &KnnModel, x: &[f64]) -> Result<(i8, Vec<usize>), ClassifierError> {
    let store = &model.store;
    if store.is_empty() {
        return Err(ClassifierError::EmptyStore);
    }
    check_dim(store.dim(), x.len())?;
    let k = model.k.min(store.len());
    let mut dist: Vec<(f64, usize)> = store
        .features
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            let d: f64 = row.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            (d, i)
        })
        .collect();
    let order = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < dist.len() {
        dist.select_nth_unstable_by(k - 1, order);
        dist.truncate(k);
    }
    dist.sort_unstable_by(order);
    let neighbors: Vec<usize> = dist.iter().map(|&(_, i)| i).collect();
    let vote: i32 = neighbors.iter().map(|&i| store.labels[i] as i32).sum();
    Ok((if vote >= 0 { 1 } else { -1 }, neighbors))
}
