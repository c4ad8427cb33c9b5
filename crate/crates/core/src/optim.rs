//! Losses and the Adam optimizer.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label::Label;
use crate::tensor::{Scalar, Tensor, TensorError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("{loss}: target {value} at index {index} is not one of {allowed}")]
    BadTarget {
        loss: &'static str,
        index: usize,
        value: f64,
        allowed: &'static str,
    },
    #[error("{0}: scores and targets must be non-empty and equally long")]
    Length(&'static str),
    #[error("adam: expected {expected} parameter tensors, got {actual}")]
    ParamCount { expected: usize, actual: usize },
}

/// Probabilities are clamped to `[BCE_EPSILON, 1 - BCE_EPSILON]` before the log.
pub const BCE_EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Targets in {-1, +1}, raw scores.
    Hinge,
    /// Targets in {0, 1}, sigmoid probabilities.
    Bce,
}

impl LossKind {
    /// Maps a class to its numeric target. `real` is the positive output for
    /// both heads.
    pub fn target<T: Scalar>(self, label: Label) -> T {
        match (self, label) {
            (LossKind::Hinge, Label::Real) => T::one(),
            (LossKind::Hinge, Label::Deepfake) => -T::one(),
            (LossKind::Bce, Label::Real) => T::one(),
            (LossKind::Bce, Label::Deepfake) => T::zero(),
        }
    }

    pub fn targets<T: Scalar>(self, labels: &[Label]) -> Result<Tensor<T>, TensorError> {
        Tensor::from_vec(labels.iter().map(|&l| self.target(l)).collect())
    }

    /// Mean loss and its gradient with respect to the model outputs.
    pub fn evaluate<T: Scalar>(self, outputs: &Tensor<T>, targets: &Tensor<T>) -> Result<(T, Tensor<T>), OptimError> {
        match self {
            LossKind::Hinge => hinge_loss(outputs, targets),
            LossKind::Bce => bce_loss(outputs, targets),
        }
    }
}

fn check_lengths<T: Scalar>(loss: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<usize, OptimError> {
    if a.len() != b.len() || a.is_empty() {
        return Err(OptimError::Length(loss));
    }
    Ok(a.len())
}

/// `mean(max(0, 1 - y*s))`. The subgradient at the kink is taken as 0.
pub fn hinge_loss<T: Scalar>(scores: &Tensor<T>, targets: &Tensor<T>) -> Result<(T, Tensor<T>), OptimError> {
    let n = check_lengths("hinge", scores, targets)?;
    let inv_n = T::one() / T::of(n as f64);
    let mut total = T::zero();
    let mut grad = Vec::with_capacity(n);
    for (i, (&s, &y)) in scores.data().iter().zip(targets.data()).enumerate() {
        if y != T::one() && y != -T::one() {
            return Err(OptimError::BadTarget {
                loss: "hinge",
                index: i,
                value: y.to_f64_lossless(),
                allowed: "{-1, +1}",
            });
        }
        let margin = T::one() - y * s;
        if margin > T::zero() {
            total = total + margin;
            grad.push(-y * inv_n);
        } else {
            grad.push(T::zero());
        }
    }
    Ok((total * inv_n, Tensor::new(scores.shape().to_vec(), grad)?))
}

/// `mean(-y ln p - (1-y) ln(1-p))` on clamped probabilities. Inputs outside
/// the clamp window receive zero gradient.
pub fn bce_loss<T: Scalar>(probs: &Tensor<T>, targets: &Tensor<T>) -> Result<(T, Tensor<T>), OptimError> {
    let n = check_lengths("bce", probs, targets)?;
    let eps = T::of(BCE_EPSILON);
    let hi = T::one() - eps;
    let inv_n = T::one() / T::of(n as f64);
    let mut total = T::zero();
    let mut grad = Vec::with_capacity(n);
    for (i, (&p, &y)) in probs.data().iter().zip(targets.data()).enumerate() {
        if y != T::one() && y != T::zero() {
            return Err(OptimError::BadTarget {
                loss: "bce",
                index: i,
                value: y.to_f64_lossless(),
                allowed: "{0, 1}",
            });
        }
        let clamped = p.max(eps).min(hi);
        let one_minus = T::one() - clamped;
        total = total - (y * clamped.ln() + (T::one() - y) * one_minus.ln());
        if p < eps || p > hi {
            grad.push(T::zero());
        } else {
            grad.push((-y / clamped + (T::one() - y) / one_minus) * inv_n);
        }
    }
    Ok((total * inv_n, Tensor::new(probs.shape().to_vec(), grad)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates for every parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    t: u32,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a Tensor<T>>) -> Self {
        let (m, v) = params
            .into_iter()
            .map(|p| (p.zeros_like(), p.zeros_like()))
            .unzip();
        Self { config, t: 0, m, v }
    }

    pub fn step_count(&self) -> u32 {
        self.t
    }

    pub fn moments(&self) -> (&[Tensor<T>], &[Tensor<T>]) {
        (&self.m, &self.v)
    }

    /// One bias-corrected Adam update applied in place.
    pub fn apply(&mut self, params: &mut [&mut Tensor<T>], grads: &[Tensor<T>]) -> Result<(), OptimError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(OptimError::ParamCount {
                expected: self.m.len(),
                actual: params.len().min(grads.len()),
            });
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(TensorError::ShapeMismatch {
                    op: "adam",
                    left: p.shape().to_vec(),
                    right: g.shape().to_vec(),
                }
                .into());
            }
        }
        self.t += 1;
        let c = self.config;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        let bc1 = T::one() - b1.powi(self.t as i32);
        let bc2 = T::one() - b2.powi(self.t as i32);
        let (lr, eps) = (T::of(c.lr), T::of(c.epsilon));
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let iter = p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()));
            for ((theta, &g), (m, v)) in iter {
                *m = b1 * *m + one_b1 * g;
                *v = b2 * *v + one_b2 * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *theta = *theta - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
