//! Seeded random streams.
//!
//! The generator is ChaCha8 keyed from a 64-bit seed, which produces the same
//! stream on every platform. Child streams are derived from the parent *seed*
//! (not its current position) plus a label, so the order in which children
//! are created never changes what they produce.

use rand::distr::{Distribution, Uniform};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::{Scalar, Tensor, TensorError};

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over the label bytes.
fn label_hash(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream named by `label`.
    pub fn derive(&self, label: &str) -> Rng {
        Rng::new(mix64(self.seed ^ mix64(label_hash(label))))
    }

    /// Independent stream named by `label` and an index (epoch, sample, ...).
    pub fn derive_indexed(&self, label: &str, index: u64) -> Rng {
        Rng::new(mix64(mix64(self.seed ^ mix64(label_hash(label))) ^ index))
    }

    /// Uniform draw in `[0, 1)` with 53 bits of resolution.
    pub fn next_f64(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[lo, hi)`. A degenerate range `lo == hi` returns `lo`.
    pub fn uniform_scalar(&mut self, lo: f64, hi: f64) -> f64 {
        if lo == hi {
            return lo;
        }
        let v = lo + (hi - lo) * self.next_f64();
        if v >= hi {
            lo
        } else {
            v
        }
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<E>(&mut self, items: &mut [E]) {
        for i in (1..items.len()).rev() {
            let j = (self.inner.next_u64() % (i as u64 + 1)) as usize;
            items.swap(i, j);
        }
    }

    /// Tensor of values drawn uniformly from `[lo, hi)`.
    pub fn uniform<T: Scalar>(
        &mut self,
        shape: impl Into<Vec<usize>>,
        lo: T,
        hi: T,
    ) -> Result<Tensor<T>, TensorError> {
        rng_uniform(self, shape, lo, hi)
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

pub fn rng_uniform<T: Scalar>(
    rng: &mut Rng,
    shape: impl Into<Vec<usize>>,
    lo: T,
    hi: T,
) -> Result<Tensor<T>, TensorError> {
    let range = || TensorError::InvalidRange {
        lo: lo.to_f64_lossless(),
        hi: hi.to_f64_lossless(),
    };
    if lo >= hi || !lo.is_finite() || !hi.is_finite() {
        return Err(range());
    }
    let dist = Uniform::new(lo, hi).map_err(|_| range())?;
    let shape = shape.into();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| dist.sample(&mut rng.inner)).collect();
    Tensor::new(shape, data)
}
