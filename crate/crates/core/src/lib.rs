//! Deepfake face-image classification engine.
//!
//! A small NHWC tensor library with hand-written backward passes, two
//! convolutional classifiers (a hinge-loss SVM head and a sigmoid head), an
//! Adam trainer, image ingestion and augmentation, and exact binary metrics.

pub mod data;
pub mod fixture;
pub mod gradcheck;
pub mod label;
pub mod layers;
pub mod metrics;
pub mod models;
pub mod optim;
pub mod rng;
pub mod tensor;

pub use data::{AugmentConfig, Batch, DataError, InMemorySource, Manifest, ManifestSource, Sample, SampleSource, Split};
pub use label::Label;
pub use layers::{Activation, Layer, LayerError, LayerSpec, Mode};
pub use metrics::{ConfusionMatrix, EvaluationReport, Metric, MetricsError, MetricsReport};
pub use models::{
    evaluate, load_checkpoint, save_checkpoint, train, CheckpointError, EpochRecord, Hyper, Model, ModelError,
    ModelKind, ModelSpec, Predictions, TrainConfig, TrainError, Trainer,
};
pub use optim::{AdamConfig, AdamState, LossKind};
pub use rng::Rng;
pub use tensor::{Kernel, Scalar, Tensor, TensorError};
