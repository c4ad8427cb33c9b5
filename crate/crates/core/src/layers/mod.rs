//! Network layers with hand-written backward passes.
//!
//! Every layer follows the same contract: `forward` is a pure function of the
//! parameters and the input and returns the output plus whatever the backward
//! pass needs; `backward` consumes that cache together with the upstream
//! gradient and returns the input gradient and the parameter gradients in
//! declaration order (weights, then bias).
//!
//! Image tensors are NHWC throughout.

mod conv;
mod dense;
mod dropout;
mod flatten;
mod pool;

pub use conv::{same_padding, Conv2D, Conv2DCache, ConvPath};
pub use dense::{Dense, DenseCache};
pub use dropout::{Dropout, DropoutMask};
pub use flatten::{Flatten, FlattenCache};
pub use pool::{MaxPool2D, PoolMask};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor, TensorError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LayerError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("{layer}: expected {expected} input channels/features, got {actual}")]
    WidthMismatch {
        layer: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("{layer}: spatial extent {extent} is smaller than the {window}-wide window")]
    ExtentTooSmall {
        layer: &'static str,
        extent: usize,
        window: usize,
    },
    #[error("{layer}: expected input shape {expected:?}, got {actual:?}")]
    ShapeMismatch {
        layer: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("dropout rate {0} is outside [0, 1)")]
    InvalidRate(f64),
    #[error("{0}: cache does not belong to this layer")]
    CacheMismatch(&'static str),
    #[error("{layer}: {reason}")]
    Config { layer: &'static str, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Identity => z,
            Activation::Relu => {
                if z > T::zero() {
                    z
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => T::one() / (T::one() + (-z).exp()),
        }
    }

    /// Derivative expressed through the preactivation `z` and output `y`.
    #[inline]
    pub fn derivative<T: Scalar>(self, z: T, y: T) -> T {
        match self {
            Activation::Identity => T::one(),
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => y * (T::one() - y),
        }
    }
}

/// Training mode switches dropout on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Eval,
}

/// Serializable description of one layer, without its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        in_channels: usize,
        filters: usize,
        kernel: usize,
        stride: usize,
        activation: Activation,
    },
    MaxPool2d {
        window: usize,
        stride: usize,
    },
    Dropout {
        rate: f64,
    },
    Flatten,
    Dense {
        inputs: usize,
        units: usize,
        activation: Activation,
        l2: f64,
    },
}

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::MaxPool2d { .. } => "max_pool2d",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
        }
    }

    /// Per-item output shape (batch axis excluded) for a per-item input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, LayerError> {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                filters,
                stride,
                ..
            } => {
                let [h, w, c] = image_dims(self.name(), input)?;
                if c != in_channels {
                    return Err(LayerError::WidthMismatch {
                        layer: "conv2d",
                        expected: in_channels,
                        actual: c,
                    });
                }
                Ok(vec![h.div_ceil(stride), w.div_ceil(stride), filters])
            }
            LayerSpec::MaxPool2d { window, stride } => {
                let [h, w, c] = image_dims(self.name(), input)?;
                for extent in [h, w] {
                    if extent < window {
                        return Err(LayerError::ExtentTooSmall {
                            layer: "max_pool2d",
                            extent,
                            window,
                        });
                    }
                }
                Ok(vec![(h - window) / stride + 1, (w - window) / stride + 1, c])
            }
            LayerSpec::Dropout { .. } => Ok(input.to_vec()),
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Dense { inputs, units, .. } => {
                let width: usize = input.iter().product();
                if input.len() != 1 || width != inputs {
                    return Err(LayerError::WidthMismatch {
                        layer: "dense",
                        expected: inputs,
                        actual: width,
                    });
                }
                Ok(vec![units])
            }
        }
    }
}

fn image_dims(layer: &'static str, input: &[usize]) -> Result<[usize; 3], LayerError> {
    match *input {
        [h, w, c] => Ok([h, w, c]),
        _ => Err(LayerError::ShapeMismatch {
            layer,
            expected: vec![0, 0, 0],
            actual: input.to_vec(),
        }),
    }
}

#[derive(Debug, Clone)]
pub enum Layer<T> {
    Conv2D(Conv2D<T>),
    MaxPool2D(MaxPool2D),
    Dropout(Dropout),
    Flatten(Flatten),
    Dense(Dense<T>),
}

#[derive(Debug, Clone)]
pub enum LayerCache<T> {
    Conv2D(Conv2DCache<T>),
    MaxPool2D(PoolMask),
    Dropout(DropoutMask<T>),
    Flatten(FlattenCache),
    Dense(DenseCache<T>),
}

impl<T> LayerCache<T>
where
    T: Scalar,
{
    /// Distance of the cached forward pass from the nearest point where the
    /// layer is not differentiable (ReLU at zero, max-pool ties). `None` for
    /// layers that are smooth everywhere.
    pub fn kink_margin(&self) -> Option<f64> {
        match self {
            LayerCache::Conv2D(c) => c.kink_margin(),
            LayerCache::Dense(c) => c.kink_margin(),
            LayerCache::MaxPool2D(m) => Some(m.min_gap()),
            _ => None,
        }
    }
}

impl<T: Scalar> Layer<T> {
    /// Fresh layer with seeded Glorot-uniform weights and zero biases.
    pub fn init(spec: &LayerSpec, rng: &mut Rng) -> Result<Self, LayerError> {
        Ok(match *spec {
            LayerSpec::Conv2d {
                in_channels,
                filters,
                kernel,
                stride,
                activation,
            } => Layer::Conv2D(Conv2D::new(in_channels, filters, kernel, stride, activation, rng)?),
            LayerSpec::MaxPool2d { window, stride } => Layer::MaxPool2D(MaxPool2D::new(window, stride)?),
            LayerSpec::Dropout { rate } => Layer::Dropout(Dropout::new(rate)?),
            LayerSpec::Flatten => Layer::Flatten(Flatten),
            LayerSpec::Dense {
                inputs,
                units,
                activation,
                l2,
            } => Layer::Dense(Dense::new(inputs, units, activation, l2, rng)?),
        })
    }

    /// Rebuilds a layer from its spec and parameter tensors (weights, bias).
    pub fn from_parts(spec: &LayerSpec, params: Vec<Tensor<T>>) -> Result<Self, LayerError> {
        let mut params = params.into_iter();
        let mut take = |layer| {
            params.next().ok_or(LayerError::Config {
                layer,
                reason: "missing parameter tensor".into(),
            })
        };
        let layer = match *spec {
            LayerSpec::Conv2d {
                stride, activation, ..
            } => Layer::Conv2D(Conv2D::from_params(take("conv2d")?, take("conv2d")?, stride, activation)?),
            LayerSpec::Dense { activation, l2, .. } => {
                Layer::Dense(Dense::from_params(take("dense")?, take("dense")?, activation, l2)?)
            }
            _ => Layer::init(spec, &mut Rng::new(0))?,
        };
        if params.next().is_some() {
            return Err(LayerError::Config {
                layer: spec.name(),
                reason: "too many parameter tensors".into(),
            });
        }
        if layer.spec() != *spec {
            return Err(LayerError::Config {
                layer: spec.name(),
                reason: "parameter shapes disagree with the layer description".into(),
            });
        }
        Ok(layer)
    }

    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Conv2D(c) => LayerSpec::Conv2d {
                in_channels: c.in_channels(),
                filters: c.filters(),
                kernel: c.kernel(),
                stride: c.stride,
                activation: c.activation,
            },
            Layer::MaxPool2D(p) => LayerSpec::MaxPool2d {
                window: p.window,
                stride: p.stride,
            },
            Layer::Dropout(d) => LayerSpec::Dropout { rate: d.rate() },
            Layer::Flatten(_) => LayerSpec::Flatten,
            Layer::Dense(d) => LayerSpec::Dense {
                inputs: d.inputs(),
                units: d.units(),
                activation: d.activation,
                l2: d.l2,
            },
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv2D(_) => "conv2d",
            Layer::MaxPool2D(_) => "max_pool2d",
            Layer::Dropout(_) => "dropout",
            Layer::Flatten(_) => "flatten",
            Layer::Dense(_) => "dense",
        }
    }

    pub fn forward(&self, x: &Tensor<T>, mode: Mode, rng: &mut Rng) -> Result<(Tensor<T>, LayerCache<T>), LayerError> {
        Ok(match self {
            Layer::Conv2D(c) => {
                let (y, cache) = c.forward(x)?;
                (y, LayerCache::Conv2D(cache))
            }
            Layer::MaxPool2D(p) => {
                let (y, mask) = p.forward(x)?;
                (y, LayerCache::MaxPool2D(mask))
            }
            Layer::Dropout(d) => {
                let (y, mask) = d.apply(x, mode, rng);
                (y, LayerCache::Dropout(mask))
            }
            Layer::Flatten(f) => {
                let (y, cache) = f.forward(x)?;
                (y, LayerCache::Flatten(cache))
            }
            Layer::Dense(d) => {
                let (y, cache) = d.forward(x)?;
                (y, LayerCache::Dense(cache))
            }
        })
    }

    /// Returns `(dL/dx, parameter gradients)`.
    pub fn backward(&self, cache: &LayerCache<T>, dy: &Tensor<T>) -> Result<(Tensor<T>, Vec<Tensor<T>>), LayerError> {
        match (self, cache) {
            (Layer::Conv2D(c), LayerCache::Conv2D(cache)) => {
                let g = c.backward(cache, dy)?;
                Ok((g.dx, vec![g.dw, g.db]))
            }
            (Layer::MaxPool2D(p), LayerCache::MaxPool2D(mask)) => Ok((p.backward(mask, dy)?, Vec::new())),
            (Layer::Dropout(d), LayerCache::Dropout(mask)) => Ok((d.backward(mask, dy)?, Vec::new())),
            (Layer::Flatten(f), LayerCache::Flatten(cache)) => Ok((f.backward(cache, dy)?, Vec::new())),
            (Layer::Dense(d), LayerCache::Dense(cache)) => {
                let g = d.backward(cache, dy)?;
                Ok((g.dx, vec![g.dw, g.db]))
            }
            _ => Err(LayerError::CacheMismatch(self.name())),
        }
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        match self {
            Layer::Conv2D(c) => vec![&c.weights, &c.bias],
            Layer::Dense(d) => vec![&d.weights, &d.bias],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Layer::Conv2D(c) => vec![&mut c.weights, &mut c.bias],
            Layer::Dense(d) => vec![&mut d.weights, &mut d.bias],
            _ => Vec::new(),
        }
    }

    /// Regularization term this layer adds to the loss.
    pub fn penalty(&self) -> T {
        match self {
            Layer::Dense(d) => d.l2_penalty(),
            _ => T::zero(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Layer<U> {
        match self {
            Layer::Conv2D(c) => Layer::Conv2D(c.cast()),
            Layer::Dense(d) => Layer::Dense(d.cast()),
            Layer::MaxPool2D(p) => Layer::MaxPool2D(*p),
            Layer::Dropout(d) => Layer::Dropout(*d),
            Layer::Flatten(f) => Layer::Flatten(*f),
        }
    }
}

/// Glorot-uniform limit `sqrt(6 / (fan_in + fan_out))`.
pub(crate) fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

pub(crate) fn glorot<T: Scalar>(shape: Vec<usize>, fan_in: usize, fan_out: usize, rng: &mut Rng) -> Result<Tensor<T>, TensorError> {
    let limit = glorot_limit(fan_in, fan_out);
    rng.uniform(shape, T::of(-limit), T::of(limit))
}
