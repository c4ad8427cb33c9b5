//! Run configuration: a flat `key = value` file, overridable from the command
//! line, echoed verbatim into every report.

use std::fs;
use std::path::Path;

use dfdetect_core::{AdamConfig, AugmentConfig, Hyper, Label, ModelKind, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelKind,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub filters: usize,
    pub stride: usize,
    pub hidden_units: usize,
    pub l2: f64,
    pub dropout: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub augment: bool,
    pub flip_prob: f64,
    pub shear_max: f64,
    pub zoom_min: f64,
    pub zoom_max: f64,
    pub threshold: f64,
    pub positive_class: Label,
    /// Dataset directory or manifest CSV.
    pub data: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let hyper = Hyper::default();
        let adam = AdamConfig::default();
        let aug = AugmentConfig::default();
        let train = TrainConfig::default();
        Self {
            model: ModelKind::CnnSigmoid,
            height: 64,
            width: 64,
            kernel: hyper.kernel,
            filters: hyper.filters,
            stride: hyper.stride,
            hidden_units: hyper.hidden_units,
            l2: hyper.l2,
            dropout: hyper.dropout,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            epochs: train.epochs,
            batch_size: train.batch_size,
            seed: train.seed,
            augment: true,
            flip_prob: aug.flip_prob,
            shear_max: aug.shear_max,
            zoom_min: aug.zoom_min,
            zoom_max: aug.zoom_max,
            threshold: train.threshold,
            positive_class: Label::Deepfake,
            data: None,
        }
    }
}

impl RunConfig {
    /// Reads `file` (if any) and applies `key=value` overrides on top.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table = match file {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
            }
            None => toml::Table::new(),
        };
        for item in overrides {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("override `{item}` is not key=value")))?;
            let key = key.trim();
            let value = value.trim();
            let parsed = format!("v = {value}")
                .parse::<toml::Table>()
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(value.to_string()));
            table.insert(key.to_string(), parsed);
        }
        let config: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| CliError::config(format!("config: {}", e.message())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |msg: String| Err(CliError::config(msg));
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return fail(format!("lr {} must be a finite non-negative number", self.lr));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return fail("beta1 and beta2 must lie in [0, 1)".into());
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return fail("epsilon must be positive".into());
        }
        if self.l2.is_nan() || self.l2 < 0.0 {
            return fail("l2 must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return fail("threshold must lie in [0, 1]".into());
        }
        self.augment_config().map(|a| a.validate()).transpose().map_err(|e| CliError::config(e.to_string()))?;
        dfdetect_core::ModelSpec::new(self.model, self.input_shape(), &self.hyper())
            .map_err(|e| CliError::config(e.to_string()))?;
        Ok(())
    }

    pub fn input_shape(&self) -> [usize; 3] {
        [self.height, self.width, 3]
    }

    pub fn hyper(&self) -> Hyper {
        Hyper {
            kernel: self.kernel,
            filters: self.filters,
            stride: self.stride,
            hidden_units: self.hidden_units,
            l2: self.l2,
            dropout: self.dropout,
        }
    }

    pub fn augment_config(&self) -> Option<AugmentConfig> {
        self.augment.then_some(AugmentConfig {
            flip_prob: self.flip_prob,
            shear_max: self.shear_max,
            zoom_min: self.zoom_min,
            zoom_max: self.zoom_max,
        })
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            adam: AdamConfig {
                lr: self.lr,
                beta1: self.beta1,
                beta2: self.beta2,
                epsilon: self.epsilon,
            },
            seed: self.seed,
            augment: self.augment_config(),
            threshold: self.threshold,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
