//! Single-hidden-layer perceptron (tanh hidden units, logistic output)
//! trained in batch mode with resilient backpropagation.
//!
//! The error is E(w) = 1/2 sum_t (d_t - o_t)^2 with targets 0.9 for
//! abnormal and 0.1 for normal cycles. Each epoch adapts one step size per
//! weight from the sign of successive gradients and moves the weight by
//! that step against the gradient sign. A step that would raise E is
//! rejected: weights stay put and the step sizes that moved are shrunk.

use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_dim, ClassifierError, LabeledSet};

pub const TARGET_HIGH: f64 = 0.9;
pub const TARGET_LOW: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RpropParams {
    pub eta_plus: f64,
    pub eta_minus: f64,
    pub delta_min: f64,
    pub delta_max: f64,
    pub delta_init: f64,
}

impl Default for RpropParams {
    fn default() -> Self {
        Self {
            eta_plus: 1.2,
            eta_minus: 0.5,
            delta_min: 1e-6,
            delta_max: 50.0,
            delta_init: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Training stops once an accepted step lowers E by less than this.
    pub min_improvement: f64,
    pub rprop: RpropParams,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: 40,
            epochs: 500,
            seed: 0,
            min_improvement: 1e-8,
            rprop: RpropParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    /// m x (d+1); column 0 multiplies the constant input x_0 = 1.
    pub w_hidden: Array2<f64>,
    /// s x (m+1); column 0 multiplies the constant hidden unit h_0 = 1.
    pub w_out: Array2<f64>,
}

/// Gradient of E with the same layout as the model weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradient {
    pub hidden: Array2<f64>,
    pub out: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingTrace {
    /// E(w) after each epoch, starting with the initial weights.
    pub errors: Vec<f64>,
    pub rejected_steps: usize,
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn with_bias(x: &Array2<f64>) -> Array2<f64> {
    concatenate![Axis(1), Array2::ones((x.nrows(), 1)), *x]
}

fn targets(labels: &[i8]) -> Array2<f64> {
    Array2::from_shape_fn((labels.len(), 1), |(i, _)| {
        if labels[i] > 0 {
            TARGET_HIGH
        } else {
            TARGET_LOW
        }
    })
}

impl MlpModel {
    /// Uniform weights in [-0.5, 0.5] from a seeded generator.
    pub fn random(inputs: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w_hidden = Array2::from_shape_fn((hidden, inputs + 1), |_| rng.gen_range(-0.5..=0.5));
        let w_out = Array2::from_shape_fn((1, hidden + 1), |_| rng.gen_range(-0.5..=0.5));
        Self { w_hidden, w_out }
    }

    pub fn inputs(&self) -> usize {
        self.w_hidden.ncols() - 1
    }

    /// Output activations for bias-augmented inputs, plus hidden activations.
    fn forward(&self, xb: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let hidden = xb.dot(&self.w_hidden.t()).mapv(f64::tanh);
        let hb = with_bias(&hidden);
        let out = hb.dot(&self.w_out.t()).mapv(logistic);
        (hb, out)
    }

    fn error_and_gradient(&self, xb: &Array2<f64>, d: &Array2<f64>) -> (f64, MlpGradient) {
        let (hb, o) = self.forward(xb);
        let residual = d - &o;
        let error = 0.5 * residual.iter().map(|r| r * r).sum::<f64>();
        // dE/dz at the output
        let delta_out = -&residual * &o * &o.mapv(|v| 1.0 - v);
        let g_out = delta_out.t().dot(&hb);
        let h = hb.slice(s![.., 1..]);
        let back = delta_out.dot(&self.w_out.slice(s![.., 1..]));
        let delta_hidden = back * &h.mapv(|v| 1.0 - v * v);
        let g_hidden = delta_hidden.t().dot(xb);
        (
            error,
            MlpGradient {
                hidden: g_hidden,
                out: g_out,
            },
        )
    }

    fn error(&self, xb: &Array2<f64>, d: &Array2<f64>) -> f64 {
        let (_, o) = self.forward(xb);
        0.5 * (d - &o).iter().map(|r| r * r).sum::<f64>()
    }
}

/// E(w) and its gradient over a labeled set.
pub fn mlp_error_gradient(model: &MlpModel, data: &LabeledSet) -> Result<(f64, MlpGradient), ClassifierError> {
    check_dim(model.inputs(), data.dim())?;
    Ok(model.error_and_gradient(&with_bias(&data.features), &targets(&data.labels)))
}

/// Per-weight resilient step state for one weight matrix.
struct RpropState {
    step: Array2<f64>,
    prev_grad: Array2<f64>,
}

impl RpropState {
    fn new(shape: (usize, usize), init: f64) -> Self {
        Self {
            step: Array2::from_elem(shape, init),
            prev_grad: Array2::zeros(shape),
        }
    }

    /// Adapts step sizes and returns the proposed weight change.
    fn propose(&mut self, grad: &Array2<f64>, p: &RpropParams) -> Array2<f64> {
        let mut change = Array2::zeros(grad.raw_dim());
        ndarray::Zip::from(&mut change)
            .and(&mut self.step)
            .and(&mut self.prev_grad)
            .and(grad)
            .for_each(|c, step, prev, &g| {
                let agreement = *prev * g;
                let mut g_eff = g;
                if agreement > 0.0 {
                    *step = (*step * p.eta_plus).min(p.delta_max);
                } else if agreement < 0.0 {
                    *step = (*step * p.eta_minus).max(p.delta_min);
                    g_eff = 0.0;
                }
                *c = if g_eff > 0.0 {
                    -*step
                } else if g_eff < 0.0 {
                    *step
                } else {
                    0.0
                };
                *prev = g_eff;
            });
        change
    }

    /// Undoes the sign memory and shrinks every step that moved.
    fn reject(&mut self, change: &Array2<f64>, p: &RpropParams) {
        ndarray::Zip::from(&mut self.step)
            .and(&mut self.prev_grad)
            .and(change)
            .for_each(|step, prev, &c| {
                if c != 0.0 {
                    *step = (*step * p.eta_minus).max(p.delta_min);
                }
                *prev = 0.0;
            });
    }
}

/// Trains with an explicit configuration and returns the error trace.
pub fn mlp_train_with(data: &LabeledSet, config: &MlpConfig) -> Result<(MlpModel, TrainingTrace), ClassifierError> {
    if data.is_empty() {
        return Err(ClassifierError::EmptyStore);
    }
    if config.hidden == 0 {
        return Err(ClassifierError::BadParameter("hidden layer needs at least one unit".into()));
    }
    let xb = with_bias(&data.features);
    let d = targets(&data.labels);
    let mut model = MlpModel::random(data.dim(), config.hidden, config.seed);
    let p = &config.rprop;
    let mut hidden_state = RpropState::new(model.w_hidden.dim(), p.delta_init);
    let mut out_state = RpropState::new(model.w_out.dim(), p.delta_init);

    let (mut error, mut grad) = model.error_and_gradient(&xb, &d);
    let mut trace = TrainingTrace {
        errors: vec![error],
        rejected_steps: 0,
    };
    for _ in 0..config.epochs {
        let dh = hidden_state.propose(&grad.hidden, p);
        let dout = out_state.propose(&grad.out, p);
        let candidate = MlpModel {
            w_hidden: &model.w_hidden + &dh,
            w_out: &model.w_out + &dout,
        };
        let (cand_error, cand_grad) = candidate.error_and_gradient(&xb, &d);
        if cand_error <= error {
            let gain = error - cand_error;
            model = candidate;
            error = cand_error;
            grad = cand_grad;
            trace.errors.push(error);
            if gain < config.min_improvement && (dh.iter().any(|&v| v != 0.0) || dout.iter().any(|&v| v != 0.0)) {
                break;
            }
        } else {
            hidden_state.reject(&dh, p);
            out_state.reject(&dout, p);
            trace.rejected_steps += 1;
            trace.errors.push(error);
        }
    }
    debug_assert!((model.error(&xb, &d) - error).abs() < 1e-9);
    Ok((model, trace))
}

pub fn mlp_train(data: &LabeledSet, epochs: usize, seed: u64) -> Result<MlpModel, ClassifierError> {
    let config = MlpConfig {
        epochs,
        seed,
        ..MlpConfig::default()
    };
    mlp_train_with(data, &config).map(|(m, _)| m)
}

/// Label +1 when the logistic output is at least 0.5.
pub fn mlp_predict(model: &MlpModel, x: &[f64]) -> Result<(i8, f64), ClassifierError> {
    check_dim(model.inputs(), x.len())?;
    let xb = Array1::from_iter(std::iter::once(1.0).chain(x.iter().copied()));
    let h = model.w_hidden.dot(&xb).mapv(f64::tanh);
    let hb = Array1::from_iter(std::iter::once(1.0).chain(h.iter().copied()));
    let o = logistic(model.w_out.row(0).dot(&hb));
    Ok((if o >= 0.5 { 1 } else { -1 }, o))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> LabeledSet {
        let rows = vec![
            vec![0.1, 0.2],
            vec![0.3, 0.1],
            vec![0.2, 0.4],
            vec![0.8, 0.9],
            vec![0.9, 0.7],
            vec![0.7, 0.8],
        ];
        LabeledSet::from_rows(&rows, &[-1, -1, -1, 1, 1, 1]).unwrap()
    }

    #[test]
    fn zero_weights_sit_on_the_boundary() {
        let m = MlpModel {
            w_hidden: Array2::zeros((3, 3)),
            w_out: Array2::zeros((1, 4)),
        };
        assert_eq!(mlp_predict(&m, &[0.3, -2.0]).unwrap(), (1, 0.5));
    }

    #[test]
    fn zero_epochs_is_seeded_init() {
        let a = mlp_train(&toy(), 0, 7).unwrap();
        assert_eq!(a, MlpModel::random(2, 40, 7));
        assert_eq!(a, mlp_train(&toy(), 0, 7).unwrap());
        assert_ne!(a, mlp_train(&toy(), 0, 8).unwrap());
        assert!(a.w_hidden.iter().all(|w| (-0.5..=0.5).contains(w)));
    }

    #[test]
    fn training_separates_toy_set() {
        let data = toy();
        let (m, trace) = mlp_train_with(&data, &MlpConfig::default()).unwrap();
        assert!(trace.errors.windows(2).all(|w| w[1] <= w[0]));
        for (row, &y) in data.features.rows().into_iter().zip(&data.labels) {
            let (label, score) = mlp_predict(&m, &row.to_vec()).unwrap();
            assert_eq!(label, y);
            assert!(score > 0.0 && score < 1.0);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let data = toy();
        let m = MlpModel::random(2, 5, 3);
        let (_, g) = mlp_error_gradient(&m, &data).unwrap();
        let h = 1e-6;
        for (r, c) in [(0, 0), (2, 1), (4, 2)] {
            let mut plus = m.clone();
            plus.w_hidden[[r, c]] += h;
            let mut minus = m.clone();
            minus.w_hidden[[r, c]] -= h;
            let fd = (mlp_error_gradient(&plus, &data).unwrap().0 - mlp_error_gradient(&minus, &data).unwrap().0)
                / (2.0 * h);
            let an = g.hidden[[r, c]];
            assert!((fd - an).abs() <= 1e-5 * an.abs().max(1e-8), "{fd} vs {an}");
        }
    }

    #[test]
    fn dimension_checked() {
        let m = MlpModel::random(2, 3, 0);
        assert!(matches!(
            mlp_predict(&m, &[1.0]),
            Err(ClassifierError::DimensionMismatch { .. })
        ));
    }
}
