//! Seeded synthetic dataset: bright "real" images and dark "deepfake" ones.
//!
//! Real pixels lie in `[0.55, 1.0]` and deepfake pixels in `[0.0, 0.45]`, so
//! the classes are separable by mean intensity. Nothing is stored on disk
//! unless [`write_fixture_tree`] is called.

use std::fs;
use std::path::{Path, PathBuf};

use crate::data::{load_manifest, write_ppm, DataError, InMemorySource, Manifest, Sample, Split};
use crate::label::Label;
use crate::rng::Rng;
use crate::tensor::Tensor;

const NOISE: f64 = 0.1;

fn base_range(label: Label) -> (f64, f64) {
    match label {
        Label::Real => (0.65, 0.9),
        Label::Deepfake => (0.1, 0.35),
    }
}

/// One `[h, w, 3]` image of the given class.
pub fn synthetic_image(label: Label, height: usize, width: usize, rng: &mut Rng) -> Tensor<f32> {
    let (lo, hi) = base_range(label);
    let base = rng.uniform_scalar(lo, hi);
    let data = (0..height * width * 3)
        .map(|_| (base + rng.uniform_scalar(-NOISE, NOISE)) as f32)
        .collect();
    Tensor::new(vec![height, width, 3], data).expect("shape matches data")
}

/// `n` samples alternating real, deepfake, real, ...
pub fn synthetic_samples(n: usize, height: usize, width: usize, seed: u64) -> Vec<Sample> {
    let root = Rng::new(seed).derive("fixture");
    (0..n)
        .map(|i| {
            let label = if i % 2 == 0 { Label::Real } else { Label::Deepfake };
            let mut rng = root.derive_indexed("image", i as u64);
            Sample {
                image: synthetic_image(label, height, width, &mut rng),
                label,
                path: PathBuf::from(format!("synthetic/{i:04}")),
            }
        })
        .collect()
}

pub fn synthetic_source(n: usize, height: usize, width: usize, seed: u64) -> InMemorySource {
    InMemorySource::new([height, width, 3], synthetic_samples(n, height, width, seed)).expect("uniform shapes")
}

/// Number of images per split written by [`write_fixture_tree`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixtureCounts {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

/// Writes a `root/{split}/{real,fake}/NNNN.ppm` tree and returns its manifest.
pub fn write_fixture_tree(
    root: impl AsRef<Path>,
    counts: FixtureCounts,
    height: usize,
    width: usize,
    seed: u64,
) -> Result<Manifest, DataError> {
    let root = root.as_ref();
    for (split, n) in [(Split::Train, counts.train), (Split::Valid, counts.valid), (Split::Test, counts.test)] {
        let split_seed = Rng::new(seed).derive(split.as_str()).seed();
        for sample in synthetic_samples(n, height, width, split_seed) {
            let class = match sample.label {
                Label::Real => "real",
                Label::Deepfake => "fake",
            };
            let dir = root.join(split.as_str()).join(class);
            fs::create_dir_all(&dir).map_err(|e| DataError::Io(format!("{}: {e}", dir.display())))?;
            let name = sample.path.file_name().expect("synthetic path has a name");
            let path = dir.join(name).with_extension("ppm");
            write_ppm(&path, &sample.image).map_err(|e| DataError::Io(format!("{}: {e}", path.display())))?;
        }
    }
    load_manifest(root)
}
