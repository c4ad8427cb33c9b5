use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{batches, AugmentConfig, DataError, EpochPlan, SampleSource};
use crate::label::Label;
use crate::layers::Mode;
use crate::models::{Model, ModelError};
use crate::optim::{AdamConfig, AdamState};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Applied to training batches only.
    pub augment: Option<AugmentConfig>,
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 64,
            adam: AdamConfig::default(),
            seed: 0,
            augment: Some(AugmentConfig::default()),
            threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean objective (data loss plus penalty) over the epoch's batches,
    /// weighted by batch size.
    pub train_loss: f64,
    /// Accuracy of the training-mode outputs seen during the epoch.
    pub train_accuracy: f64,
    pub valid_accuracy: Option<f64>,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },
    #[error("training split is empty")]
    EmptyTrain,
    #[error("source images are {source_shape:?} but the model expects {model:?}")]
    ShapeMismatch { source_shape: [usize; 3], model: [usize; 3] },
}

/// A training run that stopped early, with whatever history it produced.
#[derive(Debug, Error)]
#[error("{error}")]
pub struct TrainAbort {
    #[source]
    pub error: TrainError,
    pub history: Vec<EpochRecord>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model<f32>,
    pub history: Vec<EpochRecord>,
}

/// Model outputs over a whole source, in source order.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub scores: Vec<f64>,
    pub predicted: Vec<Label>,
    pub actual: Vec<Label>,
    pub paths: Vec<PathBuf>,
}

impl Predictions {
    pub fn accuracy(&self) -> f64 {
        if self.actual.is_empty() {
            return 0.0;
        }
        let hits = self.predicted.iter().zip(&self.actual).filter(|(p, a)| p == a).count();
        hits as f64 / self.actual.len() as f64
    }
}

pub fn evaluate<S: SampleSource + ?Sized>(
    model: &Model<f32>,
    source: &S,
    batch_size: usize,
    threshold: f64,
) -> Result<Predictions, TrainError> {
    check_shape(model, source)?;
    let plan = EpochPlan {
        batch_size,
        shuffle_seed: None,
        epoch: 0,
        augment: None,
    };
    let mut out = Predictions {
        scores: Vec::with_capacity(source.len()),
        predicted: Vec::with_capacity(source.len()),
        actual: Vec::with_capacity(source.len()),
        paths: Vec::with_capacity(source.len()),
    };
    for batch in batches(source, plan)? {
        let batch = batch?;
        for v in model.predict(&batch.images)? {
            let v = v as f64;
            out.scores.push(v);
            out.predicted.push(model.kind().decide(v, threshold));
        }
        out.actual.extend(batch.labels);
        out.paths.extend(batch.paths);
    }
    Ok(out)
}

fn check_shape<S: SampleSource + ?Sized>(model: &Model<f32>, source: &S) -> Result<(), TrainError> {
    let model_shape = model.spec().input_shape;
    if !source.is_empty() && source.item_shape() != model_shape {
        return Err(TrainError::ShapeMismatch {
            source_shape: source.item_shape(),
            model: model_shape,
        });
    }
    Ok(())
}

/// Owns the parameters and optimizer state across epochs.
pub struct Trainer {
    model: Model<f32>,
    adam: AdamState<f32>,
    config: TrainConfig,
    history: Vec<EpochRecord>,
}

impl Trainer {
    pub fn new(model: Model<f32>, config: TrainConfig) -> Self {
        let adam = AdamState::new(config.adam, model.params());
        Self {
            model,
            adam,
            config,
            history: Vec::new(),
        }
    }

    pub fn model(&self) -> &Model<f32> {
        &self.model
    }

    pub fn into_model(self) -> Model<f32> {
        self.model
    }

    pub fn history(&self) -> &[EpochRecord] {
        &self.history
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Shuffle, forward, loss, backward and one Adam step per minibatch.
    pub fn run_epoch<S, V>(&mut self, train: &S, valid: Option<&V>) -> Result<&EpochRecord, TrainError>
    where
        S: SampleSource + ?Sized,
        V: SampleSource + ?Sized,
    {
        check_shape(&self.model, train)?;
        if train.is_empty() {
            return Err(TrainError::EmptyTrain);
        }
        let epoch = self.history.len() + 1;
        let plan = EpochPlan {
            batch_size: self.config.batch_size,
            shuffle_seed: Some(self.config.seed),
            epoch: epoch as u64,
            augment: self.config.augment.as_ref(),
        };
        let dropout_rng = Rng::new(self.config.seed).derive_indexed("dropout-epoch", epoch as u64);
        let kind = self.model.kind();
        let (mut loss_sum, mut seen, mut hits) = (0.0f64, 0usize, 0usize);
        for (index, batch) in batches(train, plan)?.enumerate() {
            let batch = batch?;
            let rng = dropout_rng.derive_indexed("batch", index as u64);
            let step = self.model.loss_and_grads(&batch.images, &batch.labels, Mode::Train, &rng)?;
            if !step.loss.is_finite() {
                return Err(TrainError::NonFinite { epoch, batch: index });
            }
            self.adam
                .apply(&mut self.model.params_mut(), &step.grads)
                .map_err(ModelError::from)?;
            loss_sum += step.loss as f64 * batch.len() as f64;
            seen += batch.len();
            hits += step
                .outputs
                .iter()
                .zip(&batch.labels)
                .filter(|(&o, &l)| kind.decide(o as f64, self.config.threshold) == l)
                .count();
        }
        let valid_accuracy = match valid {
            Some(v) if !v.is_empty() => {
                Some(evaluate(&self.model, v, self.config.batch_size, self.config.threshold)?.accuracy())
            }
            _ => None,
        };
        self.history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / seen as f64,
            train_accuracy: hits as f64 / seen as f64,
            valid_accuracy,
        });
        Ok(self.history.last().expect("just pushed"))
    }
}

/// Runs `config.epochs` epochs. On failure the history so far is returned
/// alongside the error.
pub fn train<S, V>(model: Model<f32>, train: &S, valid: Option<&V>, config: TrainConfig) -> Result<TrainOutcome, TrainAbort>
where
    S: SampleSource + ?Sized,
    V: SampleSource + ?Sized,
{
    let epochs = config.epochs;
    let mut trainer = Trainer::new(model, config);
    for _ in 0..epochs {
        if let Err(error) = trainer.run_epoch(train, valid) {
            return Err(TrainAbort {
                error,
                history: trainer.history,
            });
        }
    }
    Ok(TrainOutcome {
        history: trainer.history,
        model: trainer.model,
    })
}
