use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use super::{check_dim, ClassifierError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Linear,
    Bhattacharyya,
    Intersection,
    Rbf,
}

impl KernelKind {
    pub fn needs_non_negative(self) -> bool {
        matches!(self, KernelKind::Bhattacharyya | KernelKind::Intersection)
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelKind::Linear => "linear",
            KernelKind::Bhattacharyya => "bhattacharyya",
            KernelKind::Intersection => "intersection",
            KernelKind::Rbf => "rbf",
        })
    }
}

impl FromStr for KernelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "linear" => Ok(KernelKind::Linear),
            "bhat" | "bhattacharyya" => Ok(KernelKind::Bhattacharyya),
            "isect" | "intersection" => Ok(KernelKind::Intersection),
            "rbf" => Ok(KernelKind::Rbf),
            other => Err(format!("unknown kernel `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    /// RBF width; `None` means 1/d.
    pub gamma: Option<f64>,
}

impl KernelSpec {
    pub fn new(kind: KernelKind) -> Self {
        Self { kind, gamma: None }
    }

    pub fn rbf(gamma: f64) -> Self {
        Self {
            kind: KernelKind::Rbf,
            gamma: Some(gamma),
        }
    }

    /// Fixes the RBF width for inputs of dimension `d`.
    pub fn resolved(self, d: usize) -> Self {
        match (self.kind, self.gamma) {
            (KernelKind::Rbf, None) => Self::rbf(1.0 / d.max(1) as f64),
            _ => self,
        }
    }

    pub(crate) fn check_input(&self, x: ArrayView1<f64>) -> Result<(), ClassifierError> {
        if self.kind.needs_non_negative() {
            if let Some(&v) = x.iter().find(|&&v| v < 0.0) {
                return Err(ClassifierError::NegativeInput {
                    kernel: self.kind,
                    value: v,
                });
            }
        }
        Ok(())
    }

    /// Kernel value without input validation.
    pub(crate) fn apply(&self, a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
        match self.kind {
            KernelKind::Linear => a.dot(&b),
            KernelKind::Bhattacharyya => a.iter().zip(b).map(|(x, y)| (x * y).sqrt()).sum(),
            KernelKind::Intersection => a.iter().zip(b).map(|(x, y)| x.min(*y)).sum(),
            KernelKind::Rbf => {
                let gamma = self.gamma.unwrap_or(1.0 / a.len().max(1) as f64);
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }
}

pub fn kernel_eval(spec: &KernelSpec, a: &[f64], b: &[f64]) -> Result<f64, ClassifierError> {
    check_dim(a.len(), b.len())?;
    let (a, b) = (ArrayView1::from(a), ArrayView1::from(b));
    spec.check_input(a)?;
    spec.check_input(b)?;
    Ok(spec.apply(a, b))
}

/// Symmetric kernel matrix over the rows of `x`.
pub fn gram_matrix(spec: &KernelSpec, x: &Array2<f64>) -> Result<Array2<f64>, ClassifierError> {
    let spec = spec.resolved(x.ncols());
    for row in x.rows() {
        spec.check_input(row)?;
    }
    let n = x.nrows();
    let mut k = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let v = spec.apply(x.row(i), x.row(j));
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
    }
    Ok(k)
}
