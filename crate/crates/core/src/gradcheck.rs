//! Central finite-difference checks of every backward pass, in f64.
//!
//! Each instance builds a small random layer, loss or model, computes the
//! analytic gradient of a scalar objective and compares every entry against
//! `(f(v + h) - f(v - h)) / 2h`. Instances whose forward pass sits within
//! [`KINK_MARGIN`] of a non-differentiable point (ReLU at zero, max-pool
//! ties, the hinge corner) are discarded and redrawn.

use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::Serialize;
use thiserror::Error;

use crate::label::Label;
use crate::layers::{Activation, Layer, LayerCache, LayerError, LayerSpec, Mode};
use crate::models::{Hyper, Model, ModelError, ModelKind};
use crate::optim::{bce_loss, hinge_loss, OptimError};
use crate::rng::Rng;
use crate::tensor::{Tensor, TensorError};

pub const FD_STEP: f64 = 1e-5;
pub const KINK_MARGIN: f64 = 1e-3;
/// Lower bound on the denominator of the relative error, so entries whose
/// true gradient is (near) zero are judged on absolute error instead.
pub const REL_FLOOR: f64 = 1e-5;
pub const DEFAULT_INSTANCES: usize = 20;
const MAX_ATTEMPTS_PER_INSTANCE: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Conv2d,
    MaxPool2d,
    Dropout,
    Dense,
    Flatten,
    Hinge,
    Bce,
    SvmHinge,
    CnnSigmoid,
}

impl Target {
    pub const ALL: [Target; 9] = [
        Target::Conv2d,
        Target::MaxPool2d,
        Target::Dropout,
        Target::Dense,
        Target::Flatten,
        Target::Hinge,
        Target::Bce,
        Target::SvmHinge,
        Target::CnnSigmoid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Target::Conv2d => "conv2d",
            Target::MaxPool2d => "max_pool2d",
            Target::Dropout => "dropout",
            Target::Dense => "dense",
            Target::Flatten => "flatten",
            Target::Hinge => "hinge",
            Target::Bce => "bce",
            Target::SvmHinge => "svm_hinge",
            Target::CnnSigmoid => "cnn_sigmoid",
        }
    }

    /// Maximum relative error accepted for this target.
    pub fn tolerance(self) -> f64 {
        match self {
            Target::Hinge | Target::Bce => 1e-6,
            Target::SvmHinge | Target::CnnSigmoid => 1e-4,
            _ => 1e-5,
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Target {
    type Err = GradcheckError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Target::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| GradcheckError::UnknownTarget(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GradcheckError {
    #[error("unknown gradient-check target `{0}` (expected one of conv2d, max_pool2d, dropout, dense, flatten, hinge, bce, svm_hinge, cnn_sigmoid or all)")]
    UnknownTarget(String),
    #[error("{0}: could not draw an instance away from non-differentiable points")]
    TooManyRejections(Target),
    #[error(transparent)]
    Layer(#[from] LayerError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GradcheckConfig {
    pub seed: u64,
    pub instances: usize,
    /// Corrupts the first analytic gradient entry of every instance, so the
    /// suite can be shown to fail.
    pub inject_fault: bool,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            instances: DEFAULT_INSTANCES,
            inject_fault: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub target: Target,
    pub instances: usize,
    pub rejected: usize,
    /// Gradient entries compared across all instances.
    pub entries: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.instances > 0 && self.max_rel_error < self.tolerance
    }
}

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Accumulates comparisons for one instance.
#[derive(Default)]
struct Tally {
    entries: usize,
    max_rel: f64,
}

impl Tally {
    fn compare(&mut self, analytic: &[f64], numeric: &[f64]) {
        for (&a, &n) in analytic.iter().zip(numeric) {
            self.entries += 1;
            let e = rel_error(a, n);
            if e.is_nan() || e > self.max_rel {
                self.max_rel = if e.is_nan() { f64::INFINITY } else { e };
            }
        }
    }
}

fn corrupt(grad: &mut Tensor<f64>) {
    if let Some(g) = grad.data_mut().first_mut() {
        *g += 1e-2 * g.abs().max(1.0);
    }
}

/// Central differences of `f` with respect to every entry of `values`.
fn numeric<E>(values: &Tensor<f64>, mut f: impl FnMut(&Tensor<f64>) -> Result<f64, E>) -> Result<Vec<f64>, E> {
    let mut probe = values.clone();
    let mut out = Vec::with_capacity(values.len());
    for i in 0..values.len() {
        let v = values.data()[i];
        probe.data_mut()[i] = v + FD_STEP;
        let up = f(&probe)?;
        probe.data_mut()[i] = v - FD_STEP;
        let down = f(&probe)?;
        probe.data_mut()[i] = v;
        out.push((up - down) / (2.0 * FD_STEP));
    }
    Ok(out)
}

fn pick<T: Copy>(rng: &mut Rng, options: &[T]) -> T {
    options[(rng.next_f64() * options.len() as f64) as usize]
}

fn size(rng: &mut Rng, lo: usize, hi: usize) -> usize {
    lo + (rng.next_f64() * (hi - lo + 1) as f64) as usize
}

fn random_activation(rng: &mut Rng) -> Activation {
    pick(rng, &[Activation::Identity, Activation::Relu, Activation::Sigmoid])
}

fn random_layer(target: Target, rng: &mut Rng) -> Result<(Layer<f64>, Vec<usize>), GradcheckError> {
    let batch = size(rng, 1, 2);
    let (spec, input) = match target {
        Target::Conv2d => {
            let (h, w, c) = (size(rng, 3, 7), size(rng, 3, 7), size(rng, 1, 3));
            let spec = LayerSpec::Conv2d {
                in_channels: c,
                filters: size(rng, 1, 3),
                kernel: pick(rng, &[1, 2, 3]),
                stride: pick(rng, &[1, 2]),
                activation: random_activation(rng),
            };
            (spec, vec![batch, h, w, c])
        }
        Target::MaxPool2d => (
            LayerSpec::MaxPool2d { window: 2, stride: 2 },
            vec![batch, size(rng, 2, 7), size(rng, 2, 7), size(rng, 1, 3)],
        ),
        Target::Dropout => (
            LayerSpec::Dropout {
                rate: pick(rng, &[0.0, 0.2, 0.5]),
            },
            vec![batch, size(rng, 1, 4), size(rng, 1, 4), size(rng, 1, 3)],
        ),
        Target::Flatten => (LayerSpec::Flatten, vec![batch, size(rng, 1, 4), size(rng, 1, 4), size(rng, 1, 3)]),
        Target::Dense => {
            let inputs = size(rng, 1, 6);
            let spec = LayerSpec::Dense {
                inputs,
                units: size(rng, 1, 4),
                activation: random_activation(rng),
                l2: pick(rng, &[0.0, 0.01, 0.1]),
            };
            (spec, vec![batch, inputs])
        }
        _ => unreachable!("not a layer target"),
    };
    let mut layer = Layer::init(&spec, rng)?;
    for p in layer.params_mut() {
        for v in p.data_mut() {
            *v += rng.uniform_scalar(-0.1, 0.1);
        }
    }
    Ok((layer, input))
}

fn layer_instance(target: Target, rng: &mut Rng, fault: bool, tally: &mut Tally) -> Result<bool, GradcheckError> {
    let (layer, input_shape) = random_layer(target, rng)?;
    let x = rng.uniform(input_shape, -1.0, 1.0)?;
    let mask_seed = rng.next_u64();
    let (y, cache) = layer.forward(&x, Mode::Train, &mut Rng::new(mask_seed))?;
    if kinked(&layer, &cache) {
        return Ok(false);
    }
    let weights = rng.uniform(y.shape().to_vec(), -1.0, 1.0)?;
    let objective = |l: &Layer<f64>, x: &Tensor<f64>| -> Result<f64, GradcheckError> {
        let (y, _) = l.forward(x, Mode::Train, &mut Rng::new(mask_seed))?;
        Ok(y.mul(&weights)?.sum() + l.penalty())
    };
    let (mut dx, mut grads) = layer.backward(&cache, &weights)?;
    if fault {
        corrupt(&mut dx);
    }
    tally.compare(dx.data(), &numeric(&x, |probe| objective(&layer, probe))?);
    for (p, g) in grads.iter_mut().enumerate() {
        let base = layer.params()[p].clone();
        let num = numeric(&base, |probe| {
            let mut l = layer.clone();
            *l.params_mut()[p] = probe.clone();
            objective(&l, &x)
        })?;
        tally.compare(g.data(), &num);
    }
    Ok(true)
}

/// True when a ReLU or max-pool sits within [`KINK_MARGIN`] of its kink.
fn kinked(layer: &Layer<f64>, cache: &LayerCache<f64>) -> bool {
    let kinky = match layer {
        Layer::Conv2D(c) => c.activation == Activation::Relu,
        Layer::Dense(d) => d.activation == Activation::Relu,
        Layer::MaxPool2D(_) => true,
        _ => false,
    };
    kinky && cache.kink_margin().is_some_and(|m| m < KINK_MARGIN)
}

fn loss_instance(target: Target, rng: &mut Rng, fault: bool, tally: &mut Tally) -> Result<bool, GradcheckError> {
    let n = size(rng, 1, 8);
    let loss = match target {
        Target::Hinge => hinge_loss::<f64>,
        _ => bce_loss::<f64>,
    };
    let (outputs, targets): (Vec<f64>, Vec<f64>) = (0..n)
        .map(|_| match target {
            Target::Hinge => (rng.uniform_scalar(-2.0, 2.0), pick(rng, &[-1.0, 1.0])),
            _ => (rng.uniform_scalar(0.02, 0.98), pick(rng, &[0.0, 1.0])),
        })
        .unzip();
    if target == Target::Hinge && outputs.iter().zip(&targets).any(|(s, y)| (1.0 - y * s).abs() < KINK_MARGIN) {
        return Ok(false);
    }
    let outputs = Tensor::from_vec(outputs)?;
    let targets = Tensor::from_vec(targets)?;
    let (_, mut grad) = loss(&outputs, &targets)?;
    if fault {
        corrupt(&mut grad);
    }
    tally.compare(grad.data(), &numeric(&outputs, |probe| loss(probe, &targets).map(|(l, _)| l))?);
    Ok(true)
}

fn model_instance(target: Target, rng: &mut Rng, fault: bool, tally: &mut Tally) -> Result<bool, GradcheckError> {
    let (kind, input) = match target {
        Target::SvmHinge => (ModelKind::SvmHinge, [12, 12, 3]),
        _ => (ModelKind::CnnSigmoid, [8, 8, 3]),
    };
    let hyper = Hyper {
        filters: 4,
        hidden_units: 8,
        ..Hyper::default()
    };
    let mut model = Model::<f64>::build(kind, input, &hyper, rng.next_u64())?;
    for p in model.params_mut() {
        for v in p.data_mut() {
            *v += rng.uniform_scalar(-0.1, 0.1);
        }
    }
    let batch = 2;
    let x = rng.uniform(vec![batch, input[0], input[1], input[2]], 0.0, 1.0)?;
    let labels: Vec<Label> = (0..batch).map(|_| pick(rng, &[Label::Real, Label::Deepfake])).collect();
    let dropout = Rng::new(rng.next_u64());

    let (y, near_kink) = model_forward_margin(&model, &x, &dropout)?;
    let hinge_corner = kind == ModelKind::SvmHinge
        && y.data().iter().zip(&labels).any(|(&s, &l)| {
            let t = if l == Label::Real { 1.0 } else { -1.0 };
            (1.0 - t * s).abs() < KINK_MARGIN
        });
    if near_kink || hinge_corner {
        return Ok(false);
    }

    let mut step = model.loss_and_grads(&x, &labels, Mode::Train, &dropout)?;
    if fault {
        corrupt(&mut step.grads[0]);
    }
    let params: Vec<Tensor<f64>> = model.params().into_iter().cloned().collect();
    for (p, g) in step.grads.iter().enumerate() {
        let num = numeric(&params[p], |probe| {
            let mut m = model.clone();
            *m.params_mut()[p] = probe.clone();
            m.loss_and_grads(&x, &labels, Mode::Train, &dropout).map(|s| s.loss)
        })?;
        tally.compare(g.data(), &num);
    }
    Ok(true)
}

/// Forward pass of `model` that also reports whether any ReLU or max-pool is
/// within [`KINK_MARGIN`] of its kink. A pool window whose maximum is an exact
/// zero produced by a ReLU is skipped: every entry in it is a clamped unit
/// whose preactivation already cleared the margin, so the window is locally
/// constant.
fn model_forward_margin(model: &Model<f64>, x: &Tensor<f64>, rng: &Rng) -> Result<(Tensor<f64>, bool), GradcheckError> {
    let mut h = x.clone();
    let mut after_relu = false;
    for (index, layer) in model.layers().iter().enumerate() {
        let (y, cache) = layer.forward(&h, Mode::Train, &mut rng.derive_indexed("layer", index as u64))?;
        let near = match layer {
            Layer::MaxPool2D(p) => pool_gap(&h, p.window, p.stride, after_relu) < KINK_MARGIN,
            _ => kinked(layer, &cache),
        };
        if near {
            return Ok((y, true));
        }
        after_relu = match layer {
            Layer::Conv2D(c) => c.activation == Activation::Relu,
            Layer::Dense(d) => d.activation == Activation::Relu,
            Layer::Dropout(_) | Layer::MaxPool2D(_) => after_relu,
            Layer::Flatten(_) => after_relu,
        };
        h = y;
    }
    Ok((h, false))
}

fn pool_gap(x: &Tensor<f64>, window: usize, stride: usize, skip_zero_max: bool) -> f64 {
    let &[n, h, w, c] = x.shape() else {
        return f64::INFINITY;
    };
    let (oh, ow) = ((h - window) / stride + 1, (w - window) / stride + 1);
    let mut gap = f64::INFINITY;
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    let mut vals: Vec<f64> = (0..window * window)
                        .map(|k| x.at(&[b, oy * stride + k / window, ox * stride + k % window, ch]))
                        .collect();
                    vals.sort_by(|a, b| b.total_cmp(a));
                    if skip_zero_max && vals[0] == 0.0 {
                        continue;
                    }
                    gap = gap.min(vals.get(1).map_or(f64::INFINITY, |s| vals[0] - s));
                }
            }
        }
    }
    gap
}

/// Runs `config.instances` accepted instances of one target.
pub fn check(target: Target, config: &GradcheckConfig) -> Result<CheckReport, GradcheckError> {
    let root = Rng::new(config.seed).derive(target.name());
    let mut tally = Tally::default();
    let (mut accepted, mut rejected) = (0, 0);
    let mut attempt = 0u64;
    while accepted < config.instances {
        if rejected >= MAX_ATTEMPTS_PER_INSTANCE * config.instances.max(1) {
            return Err(GradcheckError::TooManyRejections(target));
        }
        let mut rng = root.derive_indexed("instance", attempt);
        attempt += 1;
        let ok = match target {
            Target::Hinge | Target::Bce => loss_instance(target, &mut rng, config.inject_fault, &mut tally)?,
            Target::SvmHinge | Target::CnnSigmoid => model_instance(target, &mut rng, config.inject_fault, &mut tally)?,
            _ => layer_instance(target, &mut rng, config.inject_fault, &mut tally)?,
        };
        if ok {
            accepted += 1;
        } else {
            rejected += 1;
        }
    }
    Ok(CheckReport {
        target,
        instances: accepted,
        rejected,
        entries: tally.entries,
        max_rel_error: tally.max_rel,
        tolerance: target.tolerance(),
    })
}

pub fn check_all(config: &GradcheckConfig) -> Result<Vec<CheckReport>, GradcheckError> {
    Target::ALL.iter().map(|&t| check(t, config)).collect()
}
