use crate::layers::LayerError;
use crate::tensor::{Scalar, Tensor};

/// Max pooling over square, non-overlapping windows (window == stride by default).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxPool2D {
    pub window: usize,
    pub stride: usize,
}

impl Default for MaxPool2D {
    fn default() -> Self {
        Self { window: 2, stride: 2 }
    }
}

/// Winning input offset for every pooled output, recorded during forward.
#[derive(Debug, Clone)]
pub struct PoolMask {
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
    argmax: Vec<usize>,
    min_gap: f64,
}

impl PoolMask {
    pub fn argmax(&self) -> &[usize] {
        &self.argmax
    }

    /// Smallest difference between a window's maximum and its runner-up.
    pub fn min_gap(&self) -> f64 {
        self.min_gap
    }
}

impl MaxPool2D {
    pub fn new(window: usize, stride: usize) -> Result<Self, LayerError> {
        if window == 0 || stride == 0 {
            return Err(LayerError::Config {
                layer: "max_pool2d",
                reason: "window and stride must be positive".into(),
            });
        }
        Ok(Self { window, stride })
    }

    /// Ties go to the first position in row-major window order.
    pub fn forward<T: Scalar>(&self, x: &Tensor<T>) -> Result<(Tensor<T>, PoolMask), LayerError> {
        let &[n, h, w, c] = x.shape() else {
            return Err(LayerError::ShapeMismatch {
                layer: "max_pool2d",
                expected: vec![0, 0, 0, 0],
                actual: x.shape().to_vec(),
            });
        };
        for extent in [h, w] {
            if extent < self.window {
                return Err(LayerError::ExtentTooSmall {
                    layer: "max_pool2d",
                    extent,
                    window: self.window,
                });
            }
        }
        let oh = (h - self.window) / self.stride + 1;
        let ow = (w - self.window) / self.stride + 1;
        let xd = x.data();
        let mut out = Vec::with_capacity(n * oh * ow * c);
        let mut argmax = Vec::with_capacity(out.capacity());
        let mut min_gap = f64::INFINITY;
        for b in 0..n {
            for oy in 0..oh {
                for ox in 0..ow {
                    for ch in 0..c {
                        let mut best = usize::MAX;
                        let mut best_v = T::neg_infinity();
                        let mut second_v = T::neg_infinity();
                        for dy in 0..self.window {
                            for dx in 0..self.window {
                                let iy = oy * self.stride + dy;
                                let ix = ox * self.stride + dx;
                                let off = ((b * h + iy) * w + ix) * c + ch;
                                let v = xd[off];
                                if best == usize::MAX || v > best_v {
                                    second_v = best_v;
                                    best_v = v;
                                    best = off;
                                } else if v > second_v {
                                    second_v = v;
                                }
                            }
                        }
                        let gap = (best_v - second_v).to_f64_lossless();
                        if gap < min_gap {
                            min_gap = gap;
                        }
                        out.push(best_v);
                        argmax.push(best);
                    }
                }
            }
        }
        let output_shape = vec![n, oh, ow, c];
        let y = Tensor::new(output_shape.clone(), out)?;
        Ok((
            y,
            PoolMask {
                input_shape: x.shape().to_vec(),
                output_shape,
                argmax,
                min_gap,
            },
        ))
    }

    /// Routes each upstream gradient to the position that won its window.
    pub fn backward<T: Scalar>(&self, mask: &PoolMask, dy: &Tensor<T>) -> Result<Tensor<T>, LayerError> {
        if dy.shape() != mask.output_shape.as_slice() {
            return Err(LayerError::ShapeMismatch {
                layer: "max_pool2d",
                expected: mask.output_shape.clone(),
                actual: dy.shape().to_vec(),
            });
        }
        let mut dx = Tensor::zeros(mask.input_shape.clone())?;
        let dxd = dx.data_mut();
        for (&off, &g) in mask.argmax.iter().zip(dy.data()) {
            dxd[off] = dxd[off] + g;
        }
        Ok(dx)
    }
}
