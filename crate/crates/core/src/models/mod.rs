//! The two classifier architectures, training and checkpointing.
//!
//! `svm_hinge`: conv → pool → conv → pool → flatten → linear unit with an L2
//! penalty, trained with hinge loss (a linear soft-margin SVM on learned
//! convolutional features).
//!
//! `cnn_sigmoid`: conv → conv → pool → dropout → flatten → dense(relu) →
//! dropout → dense(sigmoid), trained with binary cross-entropy.
//!
//! Both heads emit a single value per image where larger means "real".

mod checkpoint;
mod train;

pub use checkpoint::{from_bytes, load_checkpoint, save_checkpoint, to_bytes, CheckpointError, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use train::{evaluate, train, EpochRecord, Predictions, TrainAbort, TrainConfig, TrainError, TrainOutcome, Trainer};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label::Label;
use crate::layers::{Activation, Layer, LayerCache, LayerError, LayerSpec, Mode};
use crate::optim::{LossKind, OptimError};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor, TensorError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("layer {index} ({layer}): {source}")]
    Layer {
        index: usize,
        layer: &'static str,
        #[source]
        source: LayerError,
    },
    #[error("input {actual:?} does not match the model input {expected:?}")]
    Input { expected: Vec<usize>, actual: Vec<usize> },
    #[error("input must be at least 8x8 with 1 or 3 channels, got {0:?}")]
    InputShape([usize; 3]),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("{0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    SvmHinge,
    CnnSigmoid,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::SvmHinge => "svm_hinge",
            ModelKind::CnnSigmoid => "cnn_sigmoid",
        }
    }

    pub fn loss(self) -> LossKind {
        match self {
            ModelKind::SvmHinge => LossKind::Hinge,
            ModelKind::CnnSigmoid => LossKind::Bce,
        }
    }

    /// Decision rule: sigmoid outputs `>= threshold` and hinge scores `>= 0`
    /// are classified as real.
    pub fn decide(self, output: f64, threshold: f64) -> Label {
        let cut = match self {
            ModelKind::SvmHinge => 0.0,
            ModelKind::CnnSigmoid => threshold,
        };
        if output >= cut {
            Label::Real
        } else {
            Label::Deepfake
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "svm_hinge" | "svm" => Ok(ModelKind::SvmHinge),
            "cnn_sigmoid" | "cnn" => Ok(ModelKind::CnnSigmoid),
            other => Err(format!("unknown model kind `{other}` (expected svm_hinge or cnn_sigmoid)")),
        }
    }
}

/// Architecture knobs shared by both model kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub kernel: usize,
    pub filters: usize,
    pub stride: usize,
    pub hidden_units: usize,
    pub l2: f64,
    pub dropout: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            kernel: 3,
            filters: 32,
            stride: 2,
            hidden_units: 128,
            l2: 0.01,
            dropout: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_shape: [usize; 3],
    pub loss: LossKind,
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, input_shape: [usize; 3], hyper: &Hyper) -> Result<Self, ModelError> {
        let [h, w, c] = input_shape;
        if h < 8 || w < 8 || !(c == 1 || c == 3) {
            return Err(ModelError::InputShape(input_shape));
        }
        let conv = |in_channels| LayerSpec::Conv2d {
            in_channels,
            filters: hyper.filters,
            kernel: hyper.kernel,
            stride: hyper.stride,
            activation: Activation::Relu,
        };
        let pool = LayerSpec::MaxPool2d { window: 2, stride: 2 };
        let dropout = LayerSpec::Dropout { rate: hyper.dropout };
        // Dense input widths are filled in by `chain`.
        let layers = match kind {
            ModelKind::SvmHinge => vec![
                conv(c),
                pool.clone(),
                conv(hyper.filters),
                pool,
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    inputs: 0,
                    units: 1,
                    activation: Activation::Identity,
                    l2: hyper.l2,
                },
            ],
            ModelKind::CnnSigmoid => vec![
                conv(c),
                conv(hyper.filters),
                pool,
                dropout.clone(),
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    inputs: 0,
                    units: hyper.hidden_units,
                    activation: Activation::Relu,
                    l2: 0.0,
                },
                dropout,
                LayerSpec::Dense {
                    inputs: 0,
                    units: 1,
                    activation: Activation::Sigmoid,
                    l2: 0.0,
                },
            ],
        };
        let mut spec = Self {
            kind,
            input_shape,
            loss: kind.loss(),
            layers,
        };
        let mut shape = input_shape.to_vec();
        for (index, layer) in spec.layers.iter_mut().enumerate() {
            if let LayerSpec::Dense { inputs, .. } = layer {
                *inputs = shape.iter().product();
            }
            shape = layer.output_shape(&shape).map_err(|source| ModelError::Layer {
                index,
                layer: layer.name(),
                source,
            })?;
        }
        Ok(spec)
    }

    /// Per-item output shape after every layer.
    pub fn chain(&self) -> Result<Vec<Vec<usize>>, ModelError> {
        let mut shape = self.input_shape.to_vec();
        let mut out = Vec::with_capacity(self.layers.len());
        for (index, layer) in self.layers.iter().enumerate() {
            shape = layer.output_shape(&shape).map_err(|source| ModelError::Layer {
                index,
                layer: layer.name(),
                source,
            })?;
            out.push(shape.clone());
        }
        if shape != [1] {
            return Err(ModelError::Config(format!("model must end in a single unit, got {shape:?}")));
        }
        Ok(out)
    }
}

/// Loss value and parameter gradients for one batch.
#[derive(Debug, Clone)]
pub struct Step<T> {
    /// Data loss plus every regularization penalty.
    pub loss: T,
    pub data_loss: T,
    pub outputs: Vec<T>,
    pub grads: Vec<Tensor<T>>,
}

#[derive(Debug, Clone)]
pub struct Model<T = f32> {
    spec: ModelSpec,
    layers: Vec<Layer<T>>,
}

impl<T: Scalar> Model<T> {
    /// Builds the architecture for `kind` with parameters drawn from `seed`.
    pub fn build(kind: ModelKind, input_shape: [usize; 3], hyper: &Hyper, seed: u64) -> Result<Self, ModelError> {
        let spec = ModelSpec::new(kind, input_shape, hyper)?;
        let mut rng = Rng::new(seed).derive("init");
        let layers = spec
            .layers
            .iter()
            .enumerate()
            .map(|(index, s)| {
                Layer::init(s, &mut rng).map_err(|source| ModelError::Layer {
                    index,
                    layer: s.name(),
                    source,
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { spec, layers })
    }

    /// Assembles a model from a spec and its parameters in declaration order.
    pub fn from_parts(spec: ModelSpec, params: Vec<Tensor<T>>) -> Result<Self, ModelError> {
        spec.chain()?;
        let mut params = params.into_iter();
        let mut layers = Vec::with_capacity(spec.layers.len());
        for (index, s) in spec.layers.iter().enumerate() {
            let n = match s {
                LayerSpec::Conv2d { .. } | LayerSpec::Dense { .. } => 2,
                _ => 0,
            };
            let mine: Vec<_> = params.by_ref().take(n).collect();
            let layer = Layer::from_parts(s, mine).map_err(|source| ModelError::Layer {
                index,
                layer: s.name(),
                source,
            })?;
            layers.push(layer);
        }
        if params.next().is_some() {
            return Err(ModelError::Config("more parameter tensors than the spec declares".into()));
        }
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn kind(&self) -> ModelKind {
        self.spec.kind
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            spec: self.spec.clone(),
            layers: self.layers.iter().map(|l| l.cast()).collect(),
        }
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<(), ModelError> {
        let ok = x.rank() == 4 && x.shape()[1..] == self.spec.input_shape;
        if !ok {
            let mut expected = vec![0];
            expected.extend_from_slice(&self.spec.input_shape);
            return Err(ModelError::Input {
                expected,
                actual: x.shape().to_vec(),
            });
        }
        Ok(())
    }

    /// Runs every layer. Layer `i` draws dropout masks from
    /// `rng.derive_indexed("layer", i)`.
    pub fn forward(&self, x: &Tensor<T>, mode: Mode, rng: &Rng) -> Result<(Tensor<T>, Vec<LayerCache<T>>), ModelError> {
        self.check_input(x)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for (index, layer) in self.layers.iter().enumerate() {
            let mut layer_rng = rng.derive_indexed("layer", index as u64);
            let (y, cache) = layer.forward(&h, mode, &mut layer_rng).map_err(|source| ModelError::Layer {
                index,
                layer: layer.name(),
                source,
            })?;
            caches.push(cache);
            h = y;
        }
        Ok((h, caches))
    }

    /// One output per item: sigmoid probability of "real" or the hinge score.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Vec<T>, ModelError> {
        let (y, _) = self.forward(x, Mode::Eval, &Rng::new(0))?;
        Ok(y.into_data())
    }

    pub fn classify(&self, x: &Tensor<T>, threshold: f64) -> Result<Vec<Label>, ModelError> {
        Ok(self
            .predict(x)?
            .into_iter()
            .map(|v| self.kind().decide(v.to_f64_lossless(), threshold))
            .collect())
    }

    pub fn penalty(&self) -> T {
        self.layers.iter().fold(T::zero(), |acc, l| acc + l.penalty())
    }

    /// Forward, loss (including penalties) and backward for one batch.
    pub fn loss_and_grads(&self, x: &Tensor<T>, labels: &[Label], mode: Mode, rng: &Rng) -> Result<Step<T>, ModelError> {
        let (y, caches) = self.forward(x, mode, rng)?;
        let outputs = y.reshape(vec![y.len()])?;
        let targets = self.spec.loss.targets::<T>(labels)?;
        let (data_loss, d_out) = self.spec.loss.evaluate(&outputs, &targets)?;
        let mut dy = d_out.into_reshape(y.shape().to_vec())?;
        let mut grads_rev: Vec<Vec<Tensor<T>>> = Vec::with_capacity(self.layers.len());
        for (index, (layer, cache)) in self.layers.iter().zip(&caches).enumerate().rev() {
            let (dx, g) = layer.backward(cache, &dy).map_err(|source| ModelError::Layer {
                index,
                layer: layer.name(),
                source,
            })?;
            grads_rev.push(g);
            dy = dx;
        }
        let grads = grads_rev.into_iter().rev().flatten().collect();
        Ok(Step {
            loss: data_loss + self.penalty(),
            data_loss,
            outputs: outputs.into_data(),
            grads,
        })
    }
}
