//! Dataset ingestion, augmentation and batching.

pub mod augment;
pub mod image;
pub mod manifest;

pub use augment::{augment, flip_horizontal, AugmentConfig, AugmentDraw};
pub use image::{decode_bytes, decode_image, resize, write_ppm};
pub use manifest::{load_manifest, Manifest, ManifestRow, ManifestSummary, Split, SplitCounts};

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::label::Label;
use crate::rng::Rng;
use crate::tensor::{Tensor, TensorError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("manifest row {row}: {reason}")]
    Manifest { row: usize, reason: String },
    #[error("cannot decode {path}: {reason}")]
    Decode { path: PathBuf, reason: String },
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Shape(String),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

impl DataError {
    pub(crate) fn manifest(row: usize, reason: impl Into<String>) -> Self {
        DataError::Manifest {
            row,
            reason: reason.into(),
        }
    }

    pub(crate) fn decode(path: &Path, reason: impl Into<String>) -> Self {
        DataError::Decode {
            path: path.to_path_buf(),
            reason: reason.into(),
        }
    }
}

/// One decoded image, `[H, W, 3]` with every value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: Tensor<f32>,
    pub label: Label,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// `[N, H, W, 3]`
    pub images: Tensor<f32>,
    pub labels: Vec<Label>,
    pub paths: Vec<PathBuf>,
    /// Positions of the items within their source.
    pub indices: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Random-access collection of samples that all share one shape.
pub trait SampleSource: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `[H, W, 3]` of every sample.
    fn item_shape(&self) -> [usize; 3];

    fn get(&self, index: usize) -> Result<Sample, DataError>;
}

/// Samples already resident in memory.
#[derive(Debug, Clone)]
pub struct InMemorySource {
    shape: [usize; 3],
    samples: Vec<Sample>,
}

impl InMemorySource {
    pub fn new(shape: [usize; 3], samples: Vec<Sample>) -> Result<Self, DataError> {
        for s in &samples {
            if s.image.shape() != shape {
                return Err(DataError::Shape(format!(
                    "{}: shape {:?} differs from {:?}",
                    s.path.display(),
                    s.image.shape(),
                    shape
                )));
            }
        }
        Ok(Self { shape, samples })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }
}

impl SampleSource for InMemorySource {
    fn len(&self) -> usize {
        self.samples.len()
    }

    fn item_shape(&self) -> [usize; 3] {
        self.shape
    }

    fn get(&self, index: usize) -> Result<Sample, DataError> {
        Ok(self.samples[index].clone())
    }
}

/// Decodes and resizes manifest entries on demand.
#[derive(Debug, Clone)]
pub struct ManifestSource {
    files: Vec<(PathBuf, Label)>,
    height: usize,
    width: usize,
}

impl ManifestSource {
    pub fn new(manifest: &Manifest, split: Split, height: usize, width: usize) -> Self {
        Self {
            files: manifest
                .split(split)
                .map(|row| (manifest.resolve(row), row.label))
                .collect(),
            height,
            width,
        }
    }
}

impl SampleSource for ManifestSource {
    fn len(&self) -> usize {
        self.files.len()
    }

    fn item_shape(&self) -> [usize; 3] {
        [self.height, self.width, 3]
    }

    fn get(&self, index: usize) -> Result<Sample, DataError> {
        let (path, label) = &self.files[index];
        let raw = decode_image(path)?;
        Ok(Sample {
            image: resize(&raw, self.height, self.width)?,
            label: *label,
            path: path.clone(),
        })
    }
}

/// How one pass over a source is ordered and perturbed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochPlan<'a> {
    pub batch_size: usize,
    /// Shuffle with this seed; `None` keeps source order.
    pub shuffle_seed: Option<u64>,
    pub epoch: u64,
    pub augment: Option<&'a AugmentConfig>,
}

/// Iterator over the batches of one epoch. The final batch may be short.
pub struct Batches<'a, S: SampleSource + ?Sized> {
    source: &'a S,
    order: Vec<usize>,
    next: usize,
    plan: EpochPlan<'a>,
}

/// Visits every sample of `source` exactly once in `plan.batch_size` chunks.
///
/// Shuffling is driven by `(seed, epoch)` and each sample's augmentation by
/// `(seed, epoch, sample index)`, so batches come out identical whether items
/// are processed in parallel or not.
pub fn batches<'a, S: SampleSource + ?Sized>(source: &'a S, plan: EpochPlan<'a>) -> Result<Batches<'a, S>, DataError> {
    if plan.batch_size == 0 {
        return Err(DataError::Config("batch_size must be at least 1".into()));
    }
    if let Some(cfg) = plan.augment {
        cfg.validate()?;
    }
    let mut order: Vec<usize> = (0..source.len()).collect();
    if let Some(seed) = plan.shuffle_seed {
        Rng::new(seed).derive_indexed("shuffle", plan.epoch).shuffle(&mut order);
    }
    Ok(Batches {
        source,
        order,
        next: 0,
        plan,
    })
}

impl<S: SampleSource + ?Sized> Batches<'_, S> {
    fn load(&self, index: usize) -> Result<Sample, DataError> {
        let mut sample = self.source.get(index)?;
        if let Some(cfg) = self.plan.augment {
            let mut rng = Rng::new(self.plan.shuffle_seed.unwrap_or(0))
                .derive_indexed("augment-epoch", self.plan.epoch)
                .derive_indexed("augment-item", index as u64);
            sample.image = augment(&sample.image, cfg, &mut rng)?;
        }
        Ok(sample)
    }
}

impl<S: SampleSource + ?Sized> Iterator for Batches<'_, S> {
    type Item = Result<Batch, DataError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.order.len() {
            return None;
        }
        let end = (self.next + self.plan.batch_size).min(self.order.len());
        let indices = self.order[self.next..end].to_vec();
        self.next = end;
        let loaded: Result<Vec<Sample>, DataError> = indices.par_iter().map(|&i| self.load(i)).collect();
        Some(loaded.and_then(|samples| assemble(self.source.item_shape(), samples, indices)))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let remaining = (self.order.len() - self.next).div_ceil(self.plan.batch_size);
        (remaining, Some(remaining))
    }
}

fn assemble(shape: [usize; 3], samples: Vec<Sample>, indices: Vec<usize>) -> Result<Batch, DataError> {
    let mut data = Vec::with_capacity(samples.len() * shape.iter().product::<usize>());
    let mut labels = Vec::with_capacity(samples.len());
    let mut paths = Vec::with_capacity(samples.len());
    for s in samples {
        if s.image.shape() != shape {
            return Err(DataError::Shape(format!(
                "{}: shape {:?} differs from {:?}",
                s.path.display(),
                s.image.shape(),
                shape
            )));
        }
        data.extend_from_slice(s.image.data());
        labels.push(s.label);
        paths.push(s.path);
    }
    let images = Tensor::new(vec![labels.len(), shape[0], shape[1], shape[2]], data)?;
    Ok(Batch {
        images,
        labels,
        paths,
        indices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn source(n: usize) -> InMemorySource {
        let samples = (0..n)
            .map(|i| Sample {
                image: Tensor::full(vec![2, 2, 3], i as f32 / n as f32).unwrap(),
                label: if i % 2 == 0 { Label::Real } else { Label::Deepfake },
                path: PathBuf::from(format!("s{i}")),
            })
            .collect();
        InMemorySource::new([2, 2, 3], samples).unwrap()
    }

    fn plan(batch_size: usize, seed: Option<u64>, epoch: u64) -> EpochPlan<'static> {
        EpochPlan {
            batch_size,
            shuffle_seed: seed,
            epoch,
            augment: None,
        }
    }

    #[test]
    fn short_final_batch() {
        let src = source(10);
        let sizes: Vec<usize> = batches(&src, plan(4, Some(1), 0))
            .unwrap()
            .map(|b| b.unwrap().len())
            .collect();
        assert_eq!(sizes, vec![4, 4, 2]);
    }

    #[test]
    fn shuffle_is_seeded_and_a_permutation() {
        let src = source(25);
        let order = |seed, epoch| -> Vec<usize> {
            batches(&src, plan(7, Some(seed), epoch))
                .unwrap()
                .flat_map(|b| b.unwrap().indices)
                .collect()
        };
        let a = order(3, 0);
        assert_eq!(a, order(3, 0));
        assert_ne!(a, order(3, 1));
        let mut sorted = a.clone();
        sorted.sort();
        assert_eq!(sorted, (0..25).collect::<Vec<_>>());
    }

    #[test]
    fn empty_source_yields_nothing() {
        let src = source(0);
        assert_eq!(batches(&src, plan(4, Some(1), 0)).unwrap().count(), 0);
        assert!(batches(&src, plan(0, None, 0)).is_err());
    }

    #[test]
    fn batch_tensor_is_nhwc() {
        let src = source(3);
        let b = batches(&src, plan(3, None, 0)).unwrap().next().unwrap().unwrap();
        assert_eq!(b.images.shape(), &[3, 2, 2, 3]);
        assert_eq!(b.labels, vec![Label::Real, Label::Deepfake, Label::Real]);
        assert_eq!(b.images.at(&[1, 1, 1, 2]), 1.0 / 3.0);
    }
}
