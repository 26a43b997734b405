//! Regularized linear classification by SGD with adaptive per-coordinate
//! step sizes.
//!
//! The objective for one binary problem is
//! `λ1·‖w‖₁ + (λ2/2)·‖w‖₂² + Σᵢ ℓ(xᵢ, yᵢ, w)` with hinge or logistic loss.
//! Each step feeds the subgradient of the example's loss plus `λ2·w` into
//! an AdaGrad accumulator; the L1 term is applied as a per-coordinate
//! soft-threshold scaled by that coordinate's step size, which yields exact
//! zeros. Features are standardized with statistics of the training rows,
//! and the bias is an unregularized extra coordinate.

mod model_io;
mod ova;
mod select;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub use model_io::{load_model, load_multi_model, model_from_json, model_to_json, save_model, save_multi_model, MODEL_FORMAT};
pub use ova::{train_one_vs_all, MultiModel};
pub use select::{default_grid, select_hyperparams, select_with, GridRow, Selection};

/// Added to the accumulator before the square root.
pub const EPSILON: f64 = 1e-8;

/// Margin loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Hinge,
    Logistic,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Hinge => "hinge",
            LossKind::Logistic => "logistic",
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hinge" => Ok(LossKind::Hinge),
            "logistic" => Ok(LossKind::Logistic),
            other => Err(Error::Validation(format!("unknown loss `{other}`"))),
        }
    }
}

/// Training configuration of one binary classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub loss: LossKind,
    pub eta0: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            lambda1: 0.0,
            lambda2: 0.0,
            loss: LossKind::Hinge,
            eta0: 0.5,
            epochs: 10,
            seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 0.0 && self.lambda1.is_finite()) || !(self.lambda2 >= 0.0 && self.lambda2.is_finite()) {
            return Err(Error::Validation(format!(
                "regularization weights must be finite and non-negative (λ1={}, λ2={})",
                self.lambda1, self.lambda2
            )));
        }
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return Err(Error::Validation(format!("eta0 must be positive, got {}", self.eta0)));
        }
        if self.epochs == 0 {
            return Err(Error::Validation("epochs must be positive".into()));
        }
        Ok(())
    }
}

/// Loss value and `dℓ/d(wᵀx)` for label `y ∈ {-1, +1}` and decision value
/// `score = wᵀx`. The subgradient with respect to `w` is `scale · x`.
///
/// The hinge boundary `y·wᵀx = 1` counts as satisfied (zero subgradient).
pub fn loss_and_subgradient(loss: LossKind, y: f64, score: f64) -> (f64, f64) {
    let margin = y * score;
    match loss {
        LossKind::Hinge => {
            if margin < 1.0 {
                (1.0 - margin, -y)
            } else {
                (0.0, 0.0)
            }
        }
        LossKind::Logistic => {
            // ln(1 + e^{-m}) and 1 / (1 + e^{m}) without overflow
            let value = if margin > 0.0 {
                (-margin).exp().ln_1p()
            } else {
                -margin + margin.exp().ln_1p()
            };
            let sigma_neg = if margin >= 0.0 {
                let e = (-margin).exp();
                e / (1.0 + e)
            } else {
                1.0 / (1.0 + margin.exp())
            };
            (value, -y * sigma_neg)
        }
    }
}

/// AdaGrad accumulator state.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub grad_sq_accum: Vec<f64>,
    pub step_count: u64,
    pub epsilon: f64,
}

impl OptimizerState {
    pub fn new(dim: usize) -> Self {
        OptimizerState {
            grad_sq_accum: vec![0.0; dim],
            step_count: 0,
            epsilon: EPSILON,
        }
    }
}

/// One composite adaptive step.
///
/// `grad` already contains the data-loss subgradient plus `λ2·w` on
/// penalized coordinates. Coordinates `0..penalized` are soft-thresholded by
/// `rate_j · λ1`; the remaining ones (the bias) take the plain step:
///
/// ```text
/// G_j += g_j²
/// r_j  = eta0 / sqrt(G_j + ε)
/// u_j  = w_j - r_j g_j
/// w_j  = sign(u_j) · max(0, |u_j| - r_j λ1)
/// ```
pub fn adagrad_step(
    state: &mut OptimizerState,
    weights: &mut [f64],
    grad: &[f64],
    h: &Hyperparams,
    penalized: usize,
) -> Result<()> {
    if weights.len() != grad.len() || state.grad_sq_accum.len() != grad.len() {
        return Err(Error::DimensionMismatch {
            expected: weights.len(),
            actual: grad.len(),
        });
    }
    if let Some(j) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient {
            step: state.step_count,
            coordinate: j,
        });
    }
    for (j, ((w, &g), acc)) in weights.iter_mut().zip(grad).zip(state.grad_sq_accum.iter_mut()).enumerate() {
        *acc += g * g;
        let rate = h.eta0 / (*acc + state.epsilon).sqrt();
        let u = *w - rate * g;
        *w = if j < penalized {
            soft_threshold(u, rate * h.lambda1)
        } else {
            u
        };
    }
    state.step_count += 1;
    Ok(())
}

#[inline]
fn soft_threshold(u: f64, t: f64) -> f64 {
    if u > t {
        u - t
    } else if u < -t {
        u + t
    } else {
        0.0
    }
}

/// Per-coordinate affine standardization `(x - mean) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardization {
    pub fn identity(dim: usize) -> Self {
        Standardization {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    /// Mean and population standard deviation of `rows`; constant
    /// coordinates get scale 1.
    pub fn fit(rows: &[&[f64]]) -> Self {
        let dim = rows.first().map_or(0, |r| r.len());
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for row in rows {
            mean.iter_mut().zip(row.iter()).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for row in rows {
            var.iter_mut()
                .zip(row.iter().zip(&mean))
                .for_each(|(s, (v, m))| *s += (v - m) * (v - m));
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardization { mean, scale }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    #[inline]
    fn apply(&self, j: usize, x: f64) -> f64 {
        (x - self.mean[j]) / self.scale[j]
    }
}

/// A trained binary classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub class_name: String,
    pub channel: String,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub hyperparams: Hyperparams,
    pub standardization: Standardization,
}

impl LinearModel {
    /// Model with zero weights and identity standardization.
    pub fn zeros(class_name: impl Into<String>, channel: impl Into<String>, dim: usize) -> Self {
        LinearModel {
            class_name: class_name.into(),
            channel: channel.into(),
            weights: vec![0.0; dim],
            bias: 0.0,
            hyperparams: Hyperparams::default(),
            standardization: Standardization::identity(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn zero_fraction(&self) -> f64 {
        self.weights.iter().filter(|&&w| w == 0.0).count() as f64 / self.dim().max(1) as f64
    }
}

/// Decision value `wᵀ·standardize(x) + bias`.
pub fn predict_score(model: &LinearModel, x: &[f64]) -> Result<f64> {
    if x.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            actual: x.len(),
        });
    }
    let s = &model.standardization;
    Ok(model
        .weights
        .iter()
        .enumerate()
        .filter(|(_, w)| **w != 0.0)
        .map(|(j, w)| w * s.apply(j, x[j]))
        .sum::<f64>()
        + model.bias)
}

/// Per-epoch average of the regularized per-example objective, measured at
/// the weights before each step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingTrace {
    pub epoch_objective: Vec<f64>,
}

/// Train one binary classifier. `labels` are `+1`/`-1`.
pub fn train_binary(class_name: &str, rows: &[&[f64]], labels: &[i8], h: &Hyperparams) -> Result<LinearModel> {
    train_binary_traced(class_name, rows, labels, h).map(|(m, _)| m)
}

/// [`train_binary`] that also returns the objective trace.
pub fn train_binary_traced(
    class_name: &str,
    rows: &[&[f64]],
    labels: &[i8],
    h: &Hyperparams,
) -> Result<(LinearModel, TrainingTrace)> {
    let mut rng = seed::rng_for(h.seed, "sgd-order");
    train_with_visit_order(class_name, rows, labels, h, |order| order.shuffle(&mut rng))
}

/// Core loop; `visit` rearranges the example order at the start of each epoch.
fn train_with_visit_order(
    class_name: &str,
    rows: &[&[f64]],
    labels: &[i8],
    h: &Hyperparams,
    mut visit: impl FnMut(&mut Vec<usize>),
) -> Result<(LinearModel, TrainingTrace)> {
    h.validate()?;
    if rows.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: rows.len(),
            actual: labels.len(),
        });
    }
    let dim = rows.first().map(|r| r.len()).ok_or_else(|| Error::Empty("no training examples".into()))?;
    if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: bad.len(),
        });
    }
    if !(labels.iter().any(|&y| y > 0) && labels.iter().any(|&y| y <= 0)) {
        return Err(Error::SingleClass(class_name.to_string()));
    }

    let standardization = Standardization::fit(rows);
    let mut weights = vec![0.0; dim + 1];
    let mut state = OptimizerState::new(dim + 1);
    let mut grad = vec![0.0; dim + 1];
    let mut x = vec![0.0; dim];
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut trace = TrainingTrace::default();

    for _ in 0..h.epochs {
        order.sort_unstable();
        visit(&mut order);
        let mut objective = 0.0;
        for &i in &order {
            for (j, v) in x.iter_mut().enumerate() {
                *v = standardization.apply(j, rows[i][j]);
            }
            let y = if labels[i] > 0 { 1.0 } else { -1.0 };
            let w = &weights[..dim];
            let score = w.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + weights[dim];
            let (loss, scale) = loss_and_subgradient(h.loss, y, score);
            let (l1, l2) = w.iter().fold((0.0, 0.0), |(a, b), v| (a + v.abs(), b + v * v));
            objective += loss + h.lambda1 * l1 + 0.5 * h.lambda2 * l2;
            for j in 0..dim {
                grad[j] = scale * x[j] + h.lambda2 * weights[j];
            }
            grad[dim] = scale;
            adagrad_step(&mut state, &mut weights, &grad, h, dim)?;
        }
        trace.epoch_objective.push(objective / rows.len() as f64);
    }

    let bias = weights.pop().expect("bias coordinate");
    Ok((
        LinearModel {
            class_name: class_name.to_string(),
            channel: String::new(),
            weights,
            bias,
            hyperparams: *h,
            standardization,
        },
        trace,
    ))
}
