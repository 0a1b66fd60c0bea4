//! Soft-margin SVM trained by SMO on the dual problem
//!
//! ```text
//! min_a  1/2 a'Qa - e'a   s.t.  0 <= a_i <= C,  y'a = 0,   Q_ij = y_i y_j K(x_i, x_j)
//! ```
//!
//! Each iteration picks the maximal violating pair and solves the
//! two-variable subproblem analytically.

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use super::kernel::{gram_matrix, KernelSpec};
use super::{check_dim, ClassifierError, LabeledSet};

/// Multipliers at or below this are not kept as support vectors.
pub const SV_THRESHOLD: f64 = 1e-8;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub c: f64,
    /// Stop when the maximal KKT violation drops below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            tol: 1e-4,
            max_iter: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub support_vectors: Vec<Vec<f64>>,
    pub alphas: Vec<f64>,
    /// alpha_i * y_i for each support vector.
    pub signed_coeffs: Vec<f64>,
    pub bias: f64,
    pub kernel: KernelSpec,
    pub c: f64,
    /// Dual objective sum(a) - 1/2 a'Qa at the solution.
    pub dual_objective: f64,
    pub iterations: usize,
}

/// Raw solver output over all training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alphas: Vec<f64>,
    /// Decision offset; f(x) = sum a_i y_i K(x_i, x) - rho.
    pub rho: f64,
    pub dual_objective: f64,
    pub iterations: usize,
}

/// Solves the dual for a precomputed kernel matrix.
pub fn solve_dual(
    gram: &Array2<f64>,
    labels: &[i8],
    config: &SvmConfig,
) -> Result<DualSolution, ClassifierError> {
    let n = labels.len();
    let c = config.c;
    if !(c > 0.0) {
        return Err(ClassifierError::BadParameter(format!("C must be positive, got {c}")));
    }
    let y: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let q = |i: usize, j: usize| y[i] * y[j] * gram[[i, j]];
    let in_up = |a: f64, yi: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
    let in_low = |a: f64, yi: f64| (yi > 0.0 && a > 0.0) || (yi < 0.0 && a < c);

    let mut iterations = 0;
    loop {
        let mut i = usize::MAX;
        let mut g_max = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut g_min = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            if in_up(alpha[t], y[t]) && v > g_max {
                g_max = v;
                i = t;
            }
            if in_low(alpha[t], y[t]) && v < g_min {
                g_min = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || g_max - g_min < config.tol {
            break;
        }
        if iterations >= config.max_iter {
            return Err(ClassifierError::NotConverged(config.max_iter));
        }
        iterations += 1;

        let curvature = gram[[i, i]] + gram[[j, j]] - 2.0 * gram[[i, j]];
        let scale = gram[[i, i]].abs() + gram[[j, j]].abs();
        if curvature < -1e-10 * scale.max(1.0) {
            return Err(ClassifierError::IndefiniteGram);
        }
        let quad = if curvature > 0.0 { curvature } else { TAU };
        let (old_i, old_j) = (alpha[i], alpha[j]);

        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += q(t, i) * di + q(t, j) * dj;
        }
    }

    // offset from free multipliers, else midpoint of the feasible interval
    let mut free_sum = 0.0;
    let mut free = 0usize;
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    for t in 0..n {
        let yg = y[t] * grad[t];
        let at_upper = alpha[t] >= c;
        let at_lower = alpha[t] <= 0.0;
        if !at_upper && !at_lower {
            free += 1;
            free_sum += yg;
        } else if (at_upper && y[t] < 0.0) || (at_lower && y[t] > 0.0) {
            ub = ub.min(yg);
        } else {
            lb = lb.max(yg);
        }
    }
    let rho = if free > 0 {
        free_sum / free as f64
    } else {
        (ub + lb) / 2.0
    };
    let objective = -alpha
        .iter()
        .zip(&grad)
        .map(|(a, g)| a * (g - 1.0))
        .sum::<f64>()
        / 2.0;
    Ok(DualSolution {
        alphas: alpha,
        rho,
        dual_objective: objective,
        iterations,
    })
}

pub fn svm_train_with(
    data: &LabeledSet,
    spec: &KernelSpec,
    config: &SvmConfig,
) -> Result<SvmModel, ClassifierError> {
    if !data.has_both_classes() {
        return Err(ClassifierError::SingleClass);
    }
    let spec = spec.resolved(data.dim());
    let gram = gram_matrix(&spec, &data.features)?;
    let solution = solve_dual(&gram, &data.labels, config).map_err(|e| match e {
        ClassifierError::IndefiniteGram => ClassifierError::NotPsd(spec.kind),
        other => other,
    })?;
    let mut model = SvmModel {
        support_vectors: Vec::new(),
        alphas: Vec::new(),
        signed_coeffs: Vec::new(),
        bias: -solution.rho,
        kernel: spec,
        c: config.c,
        dual_objective: solution.dual_objective,
        iterations: solution.iterations,
    };
    for (i, &a) in solution.alphas.iter().enumerate() {
        if a > SV_THRESHOLD {
            model.support_vectors.push(data.features.row(i).to_vec());
            model.alphas.push(a);
            model.signed_coeffs.push(a * data.labels[i] as f64);
        }
    }
    Ok(model)
}

/// Trains with the default solver settings and penalty `c`.
pub fn svm_train(data: &LabeledSet, spec: &KernelSpec, c: f64) -> Result<SvmModel, ClassifierError> {
    svm_train_with(
        data,
        spec,
        &SvmConfig {
            c,
            ..SvmConfig::default()
        },
    )
}

impl SvmModel {
    pub fn decision_value(&self, x: &[f64]) -> Result<f64, ClassifierError> {
        if let Some(sv) = self.support_vectors.first() {
            check_dim(sv.len(), x.len())?;
        }
        let xv = ArrayView1::from(x);
        self.kernel.check_input(xv)?;
        Ok(self
            .support_vectors
            .iter()
            .zip(&self.signed_coeffs)
            .map(|(sv, coef)| coef * self.kernel.apply(ArrayView1::from(sv), xv))
            .sum::<f64>()
            + self.bias)
    }
}

/// Sign of the decision value; exactly zero counts as abnormal (+1).
pub fn svm_predict(model: &SvmModel, x: &[f64]) -> Result<(i8, f64), ClassifierError> {
    let g = model.decision_value(x)?;
    Ok((if g >= 0.0 { 1 } else { -1 }, g))
}
