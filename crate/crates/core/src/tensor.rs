//! Dense row-major tensors and the handful of kernels the layers need.
//!
//! Every reduction runs in a fixed left-to-right order so that results are
//! reproducible bit-for-bit. The fast matmul kernel walks memory in i-k-j
//! order and may split output rows across threads, but each output element
//! still sees the exact same sequence of additions as the naive triple loop.

use std::fmt;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::distr::uniform::SampleUniform;
use rayon::prelude::*;
use thiserror::Error;

/// Element type of a [`Tensor`]: `f32` for training, `f64` for gradient checks.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + SampleUniform
    + Default
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + 'static
{
    /// Converts from `f64`, rounding to nearest for `f32`.
    fn of(v: f64) -> Self;

    fn to_f64_lossless(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn to_f64_lossless(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn of(v: f64) -> Self {
        v
    }

    #[inline]
    fn to_f64_lossless(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("shape {shape:?} holds {expected} elements but {actual} were supplied")]
    LengthMismatch {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("shape {0:?} has a zero extent")]
    ZeroExtent(Vec<usize>),
    #[error("{op}: expected a rank-{expected} tensor, got shape {shape:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("invalid sampling range [{lo}, {hi})")]
    InvalidRange { lo: f64, hi: f64 },
}

/// Which matmul implementation to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Kernel {
    /// Textbook i-j-k triple loop.
    Reference,
    /// Cache-friendly i-k-j loop, rows split across threads for large products.
    #[default]
    Fast,
}

/// Products with at least this many multiply-adds are split across threads.
const PAR_THRESHOLD: usize = 1 << 16;

#[derive(Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: fmt::Debug> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SHOWN: usize = 8;
        let mut s = f.debug_struct("Tensor");
        s.field("shape", &self.shape);
        if self.data.len() <= SHOWN {
            s.field("data", &self.data);
        } else {
            s.field("data", &format_args!("{:?}..", &self.data[..SHOWN]));
        }
        s.finish()
    }
}

fn check_shape(shape: &[usize]) -> Result<usize, TensorError> {
    if shape.contains(&0) {
        return Err(TensorError::ZeroExtent(shape.to_vec()));
    }
    Ok(shape.iter().product())
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Self, TensorError> {
        let shape = shape.into();
        let expected = check_shape(&shape)?;
        if expected != data.len() {
            return Err(TensorError::LengthMismatch {
                shape,
                expected,
                actual: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: T) -> Result<Self, TensorError> {
        let shape = shape.into();
        let n = check_shape(&shape)?;
        Ok(Self {
            shape,
            data: vec![value; n],
        })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Result<Self, TensorError> {
        Self::full(shape, T::zero())
    }

    /// Zero tensor with the same shape as `self`.
    pub fn zeros_like(&self) -> Self {
        Self {
            shape: self.shape.clone(),
            data: vec![T::zero(); self.data.len()],
        }
    }

    pub fn from_vec(data: Vec<T>) -> Result<Self, TensorError> {
        let n = data.len();
        Self::new(vec![n], data)
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Row-major strides: `s[j]` is the product of the extents after axis `j`.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.shape.len()];
        for j in (0..self.shape.len().saturating_sub(1)).rev() {
            strides[j] = strides[j + 1] * self.shape[j + 1];
        }
        strides
    }

    /// Linear offset of a multi-index. Panics if the index is out of range.
    pub fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.shape.len(), "index rank");
        let mut off = 0;
        for (&i, &d) in index.iter().zip(&self.shape) {
            assert!(i < d, "index {index:?} out of bounds for {:?}", self.shape);
            off = off * d + i;
        }
        off
    }

    pub fn at(&self, index: &[usize]) -> T {
        self.data[self.offset(index)]
    }

    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Self, TensorError> {
        self.clone().into_reshape(shape)
    }

    pub fn into_reshape(self, shape: impl Into<Vec<usize>>) -> Result<Self, TensorError> {
        let shape = shape.into();
        let n = check_shape(&shape)?;
        if n != self.data.len() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                left: self.shape,
                right: shape,
            });
        }
        Ok(Self {
            shape,
            data: self.data,
        })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self, TensorError> {
        if self.shape != other.shape {
            return Err(TensorError::ShapeMismatch {
                op,
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self, TensorError> {
        self.zip_map(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, TensorError> {
        self.zip_map(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self, TensorError> {
        self.zip_map(other, "mul", |a, b| a * b)
    }

    pub fn max_scalar(&self, s: T) -> Self {
        self.map(|v| if v > s { v } else { s })
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    /// Left-to-right sum.
    pub fn sum(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc + v)
    }

    pub fn sum_squares(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc + v * v)
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc.max(v.abs()))
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|&v| U::of(v.to_f64_lossless()))
                .collect(),
        }
    }

    pub fn transpose2d(&self) -> Result<Self, TensorError> {
        let (rows, cols) = self.dims2("transpose")?;
        let mut out = Vec::with_capacity(self.data.len());
        for j in 0..cols {
            for i in 0..rows {
                out.push(self.data[i * cols + j]);
            }
        }
        Ok(Self {
            shape: vec![cols, rows],
            data: out,
        })
    }

    fn dims2(&self, op: &'static str) -> Result<(usize, usize), TensorError> {
        match self.shape.as_slice() {
            &[r, c] => Ok((r, c)),
            _ => Err(TensorError::Rank {
                op,
                expected: 2,
                shape: self.shape.clone(),
            }),
        }
    }

    pub fn matmul(&self, other: &Self) -> Result<Self, TensorError> {
        self.matmul_with(other, Kernel::Fast)
    }

    /// `c[i,j] = sum_k a[i,k] * b[k,j]`, accumulated in increasing `k`.
    pub fn matmul_with(&self, other: &Self, kernel: Kernel) -> Result<Self, TensorError> {
        let (m, k) = self.dims2("matmul")?;
        let (k2, n) = other.dims2("matmul")?;
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let a = &self.data;
        let b = &other.data;
        let mut c = vec![T::zero(); m * n];
        match kernel {
            Kernel::Reference => {
                for i in 0..m {
                    for j in 0..n {
                        let mut acc = T::zero();
                        for p in 0..k {
                            acc = acc + a[i * k + p] * b[p * n + j];
                        }
                        c[i * n + j] = acc;
                    }
                }
            }
            Kernel::Fast => {
                let row = |(i, c_row): (usize, &mut [T])| {
                    let a_row = &a[i * k..(i + 1) * k];
                    for (p, &a_ip) in a_row.iter().enumerate() {
                        let b_row = &b[p * n..(p + 1) * n];
                        for (c_ij, &b_pj) in c_row.iter_mut().zip(b_row) {
                            *c_ij = *c_ij + a_ip * b_pj;
                        }
                    }
                };
                if m * n * k >= PAR_THRESHOLD && m > 1 {
                    c.par_chunks_mut(n).enumerate().for_each(row);
                } else {
                    c.chunks_mut(n).enumerate().for_each(row);
                }
            }
        }
        Ok(Self {
            shape: vec![m, n],
            data: c,
        })
    }

    /// Column sums of a rank-2 tensor, each accumulated top to bottom.
    pub fn sum_rows(&self) -> Result<Self, TensorError> {
        let (rows, cols) = self.dims2("sum_rows")?;
        let mut out = vec![T::zero(); cols];
        for r in 0..rows {
            for (o, &v) in out.iter_mut().zip(&self.data[r * cols..(r + 1) * cols]) {
                *o = *o + v;
            }
        }
        Ok(Self {
            shape: vec![cols],
            data: out,
        })
    }
}

/// Pointwise operations exposed as a single entry point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
    MaxWithScalar,
    Scale,
}

pub enum Operand<'a, T> {
    Tensor(&'a Tensor<T>),
    Scalar(T),
}

pub fn elementwise<T: Scalar>(
    op: ElementwiseOp,
    a: &Tensor<T>,
    b: Operand<'_, T>,
) -> Result<Tensor<T>, TensorError> {
    match (op, b) {
        (ElementwiseOp::Add, Operand::Tensor(b)) => a.add(b),
        (ElementwiseOp::Sub, Operand::Tensor(b)) => a.sub(b),
        (ElementwiseOp::Mul, Operand::Tensor(b)) => a.mul(b),
        (ElementwiseOp::Add, Operand::Scalar(s)) => Ok(a.map(|v| v + s)),
        (ElementwiseOp::Sub, Operand::Scalar(s)) => Ok(a.map(|v| v - s)),
        (ElementwiseOp::Mul | ElementwiseOp::Scale, Operand::Scalar(s)) => Ok(a.scale(s)),
        (ElementwiseOp::MaxWithScalar, Operand::Scalar(s)) => Ok(a.max_scalar(s)),
        (ElementwiseOp::MaxWithScalar, Operand::Tensor(b)) => a.zip_map(b, "max", |x, y| x.max(y)),
        (ElementwiseOp::Scale, Operand::Tensor(b)) => a.mul(b),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    fn naive(a: &Tensor<f64>, b: &Tensor<f64>) -> Vec<f64> {
        let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let mut out = Vec::new();
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    s += a.at(&[i, p]) * b.at(&[p, j]);
                }
                out.push(s);
            }
        }
        out
    }

    #[test]
    fn identity_matmul() {
        let i2 = t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let m = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(i2.matmul(&m).unwrap(), m);
    }

    #[test]
    fn row_times_column() {
        let a = t(&[1, 2], &[1.0, 2.0]);
        let b = t(&[2, 1], &[3.0, 4.0]);
        assert_eq!(a.matmul(&b).unwrap().data(), &[11.0]);
    }

    #[test]
    fn matmul_matches_naive_exactly() {
        let mut rng = Rng::new(7);
        let a: Tensor<f64> = rng.uniform(vec![7, 5], -1.0, 1.0).unwrap();
        let b: Tensor<f64> = rng.uniform(vec![5, 3], -1.0, 1.0).unwrap();
        assert_eq!(a.matmul(&b).unwrap().data(), naive(&a, &b).as_slice());
    }

    #[test]
    fn kernels_agree_on_large_parallel_product() {
        let mut rng = Rng::new(11);
        let a: Tensor<f32> = rng.uniform(vec![96, 80], -1.0, 1.0).unwrap();
        let b: Tensor<f32> = rng.uniform(vec![80, 64], -1.0, 1.0).unwrap();
        let fast = a.matmul_with(&b, Kernel::Fast).unwrap();
        let slow = a.matmul_with(&b, Kernel::Reference).unwrap();
        assert_eq!(fast, slow);
    }

    #[test]
    fn matmul_shape_error_reports_both_shapes() {
        let a = Tensor::<f32>::zeros(vec![2, 3]).unwrap();
        let b = Tensor::<f32>::zeros(vec![2, 3]).unwrap();
        let err = a.matmul(&b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
        assert!(matches!(err, TensorError::ShapeMismatch { .. }));
    }

    #[test]
    fn elementwise_examples() {
        let a = t(&[2], &[1.0, 2.0]);
        let b = t(&[2], &[3.0, 4.0]);
        let sum = elementwise(ElementwiseOp::Add, &a, Operand::Tensor(&b)).unwrap();
        assert_eq!(sum.data(), &[4.0, 6.0]);
        let relu = elementwise(ElementwiseOp::MaxWithScalar, &t(&[2], &[-1.0, 2.0]), Operand::Scalar(0.0)).unwrap();
        assert_eq!(relu.data(), &[0.0, 2.0]);
        let half = elementwise(ElementwiseOp::Scale, &t(&[2], &[2.0, 4.0]), Operand::Scalar(0.5)).unwrap();
        assert_eq!(half.data(), &[1.0, 2.0]);
        let bad = elementwise(ElementwiseOp::Sub, &a, Operand::Tensor(&t(&[1], &[1.0])));
        assert!(bad.is_err());
    }

    #[test]
    fn rejects_inconsistent_construction() {
        assert!(matches!(
            Tensor::<f32>::new(vec![2, 2], vec![0.0; 3]),
            Err(TensorError::LengthMismatch { .. })
        ));
        assert!(matches!(
            Tensor::<f32>::zeros(vec![2, 0]),
            Err(TensorError::ZeroExtent(_))
        ));
    }

    #[test]
    fn row_major_offsets() {
        let x = Tensor::<f32>::zeros(vec![2, 3, 4]).unwrap();
        assert_eq!(x.strides(), vec![12, 4, 1]);
        assert_eq!(x.offset(&[1, 2, 3]), 12 + 8 + 3);
    }

    #[test]
    fn ops_do_not_mutate_inputs() {
        let a = t(&[3], &[1.0, -2.0, 3.0]);
        let before = a.clone();
        let _ = a.scale(2.0);
        let _ = a.max_scalar(0.0);
        let _ = a.add(&a).unwrap();
        assert_eq!(a, before);
    }
}
