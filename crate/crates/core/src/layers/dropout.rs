use crate::layers::{LayerError, Mode};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

/// Inverted dropout: survivors are scaled by `1 / (1 - rate)` at train time so
/// evaluation is the identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dropout {
    rate: f64,
}

/// Per-unit multiplier applied in the forward pass; `None` in eval mode.
#[derive(Debug, Clone)]
pub struct DropoutMask<T> {
    scale: Option<Tensor<T>>,
}

impl<T> DropoutMask<T> {
    pub fn scale(&self) -> Option<&Tensor<T>> {
        self.scale.as_ref()
    }
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self, LayerError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(LayerError::InvalidRate(rate));
        }
        Ok(Self { rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn apply<T: Scalar>(&self, x: &Tensor<T>, mode: Mode, rng: &mut Rng) -> (Tensor<T>, DropoutMask<T>) {
        match mode {
            Mode::Eval => (x.clone(), DropoutMask { scale: None }),
            Mode::Train => {
                let keep = 1.0 - self.rate;
                let kept = T::of(1.0 / keep);
                let data = (0..x.len())
                    .map(|_| if rng.bernoulli(keep) { kept } else { T::zero() })
                    .collect();
                let scale = Tensor::new(x.shape().to_vec(), data).expect("mask mirrors input");
                let y = x.mul(&scale).expect("mask mirrors input");
                (y, DropoutMask { scale: Some(scale) })
            }
        }
    }

    pub fn backward<T: Scalar>(&self, mask: &DropoutMask<T>, dy: &Tensor<T>) -> Result<Tensor<T>, LayerError> {
        match &mask.scale {
            None => Ok(dy.clone()),
            Some(scale) => Ok(dy.mul(scale)?),
        }
    }
}
