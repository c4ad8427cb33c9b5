use crate::layers::{glorot, Activation, LayerError};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

/// Leading and trailing zero padding for "same" convolution along one axis.
///
/// The output extent is `ceil(extent / stride)`; any odd leftover row or
/// column of padding goes on the trailing (bottom/right) edge.
pub fn same_padding(extent: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let out = extent.div_ceil(stride);
    let total = ((out - 1) * stride + kernel).saturating_sub(extent);
    (total / 2, total - total / 2)
}

/// Selects the forward implementation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConvPath {
    /// Unroll windows into a matrix and multiply.
    #[default]
    Im2col,
    /// Explicit sliding-window loops.
    Direct,
}

/// 2-D convolution with "same" padding. Weights are `[k, k, in, filters]`.
#[derive(Debug, Clone)]
pub struct Conv2D<T> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
    pub stride: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    batch: usize,
    in_h: usize,
    in_w: usize,
    in_c: usize,
    out_h: usize,
    out_w: usize,
    pad_top: usize,
    pad_left: usize,
}

#[derive(Debug, Clone)]
pub struct Conv2DCache<T> {
    geom: Geometry,
    cols: Tensor<T>,
    pre: Tensor<T>,
    out: Tensor<T>,
}

impl<T: Scalar> Conv2DCache<T> {
    pub fn preactivation(&self) -> &Tensor<T> {
        &self.pre
    }

    pub(crate) fn kink_margin(&self) -> Option<f64> {
        Some(
            self.pre
                .data()
                .iter()
                .map(|v| v.to_f64_lossless().abs())
                .fold(f64::INFINITY, f64::min),
        )
    }
}

pub struct ConvGrads<T> {
    pub dx: Tensor<T>,
    pub dw: Tensor<T>,
    pub db: Tensor<T>,
}

impl<T: Scalar> Conv2D<T> {
    pub fn new(
        in_channels: usize,
        filters: usize,
        kernel: usize,
        stride: usize,
        activation: Activation,
        rng: &mut Rng,
    ) -> Result<Self, LayerError> {
        if in_channels == 0 || filters == 0 || kernel == 0 || stride == 0 {
            return Err(LayerError::Config {
                layer: "conv2d",
                reason: "channels, filters, kernel and stride must be positive".into(),
            });
        }
        let weights = glorot(
            vec![kernel, kernel, in_channels, filters],
            kernel * kernel * in_channels,
            kernel * kernel * filters,
            rng,
        )?;
        Ok(Self {
            weights,
            bias: Tensor::zeros(vec![filters])?,
            stride,
            activation,
        })
    }

    pub fn from_params(
        weights: Tensor<T>,
        bias: Tensor<T>,
        stride: usize,
        activation: Activation,
    ) -> Result<Self, LayerError> {
        let ok = matches!(weights.shape(), &[k1, k2, _, f] if k1 == k2 && bias.shape() == [f]);
        if !ok || stride == 0 {
            return Err(LayerError::Config {
                layer: "conv2d",
                reason: format!(
                    "weights {:?} / bias {:?} / stride {stride} do not form a square convolution",
                    weights.shape(),
                    bias.shape()
                ),
            });
        }
        Ok(Self {
            weights,
            bias,
            stride,
            activation,
        })
    }

    pub fn kernel(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape()[2]
    }

    pub fn filters(&self) -> usize {
        self.weights.shape()[3]
    }

    pub fn cast<U: Scalar>(&self) -> Conv2D<U> {
        Conv2D {
            weights: self.weights.cast(),
            bias: self.bias.cast(),
            stride: self.stride,
            activation: self.activation,
        }
    }

    fn geometry(&self, x: &Tensor<T>) -> Result<Geometry, LayerError> {
        let &[batch, in_h, in_w, in_c] = x.shape() else {
            return Err(LayerError::ShapeMismatch {
                layer: "conv2d",
                expected: vec![0, 0, 0, self.in_channels()],
                actual: x.shape().to_vec(),
            });
        };
        if in_c != self.in_channels() {
            return Err(LayerError::WidthMismatch {
                layer: "conv2d",
                expected: self.in_channels(),
                actual: in_c,
            });
        }
        let k = self.kernel();
        Ok(Geometry {
            batch,
            in_h,
            in_w,
            in_c,
            out_h: in_h.div_ceil(self.stride),
            out_w: in_w.div_ceil(self.stride),
            pad_top: same_padding(in_h, k, self.stride).0,
            pad_left: same_padding(in_w, k, self.stride).0,
        })
    }

    /// Input row/column feeding output position `o` at kernel tap `tap`, or
    /// `None` when it falls in the zero padding.
    #[inline]
    fn source(o: usize, tap: usize, stride: usize, pad: usize, extent: usize) -> Option<usize> {
        (o * stride + tap).checked_sub(pad).filter(|&i| i < extent)
    }

    /// Unrolls every receptive field into one row of `[rows, k*k*in_c]`,
    /// columns ordered (ky, kx, channel) to match the weight layout.
    fn im2col(&self, x: &Tensor<T>, g: &Geometry) -> Tensor<T> {
        let k = self.kernel();
        let row_len = k * k * g.in_c;
        let rows = g.batch * g.out_h * g.out_w;
        let xd = x.data();
        let mut cols = vec![T::zero(); rows * row_len];
        for n in 0..g.batch {
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    let r = (n * g.out_h + oy) * g.out_w + ox;
                    let row = &mut cols[r * row_len..(r + 1) * row_len];
                    for ky in 0..k {
                        let Some(iy) = Self::source(oy, ky, self.stride, g.pad_top, g.in_h) else {
                            continue;
                        };
                        for kx in 0..k {
                            let Some(ix) = Self::source(ox, kx, self.stride, g.pad_left, g.in_w) else {
                                continue;
                            };
                            let src = ((n * g.in_h + iy) * g.in_w + ix) * g.in_c;
                            let dst = (ky * k + kx) * g.in_c;
                            row[dst..dst + g.in_c].copy_from_slice(&xd[src..src + g.in_c]);
                        }
                    }
                }
            }
        }
        Tensor::new(vec![rows, row_len], cols).expect("im2col shape")
    }

    fn weight_matrix(&self) -> Tensor<T> {
        let k = self.kernel();
        self.weights
            .reshape(vec![k * k * self.in_channels(), self.filters()])
            .expect("weight reshape")
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Conv2DCache<T>), LayerError> {
        self.forward_with(x, ConvPath::Im2col)
    }

    /// Both paths accumulate each output in the same (ky, kx, channel) order
    /// and then add the bias, so they agree bit-for-bit.
    pub fn forward_with(&self, x: &Tensor<T>, path: ConvPath) -> Result<(Tensor<T>, Conv2DCache<T>), LayerError> {
        let g = self.geometry(x)?;
        let cols = self.im2col(x, &g);
        let filters = self.filters();
        let pre = match path {
            ConvPath::Im2col => {
                let mut pre = cols.matmul(&self.weight_matrix())?;
                let b = self.bias.data();
                for row in pre.data_mut().chunks_mut(filters) {
                    for (v, &bias) in row.iter_mut().zip(b) {
                        *v = *v + bias;
                    }
                }
                pre
            }
            ConvPath::Direct => self.direct(x, &g),
        };
        let act = self.activation;
        let out = pre.map(|z| act.apply(z));
        let shape = vec![g.batch, g.out_h, g.out_w, filters];
        let y = out.reshape(shape)?;
        Ok((y, Conv2DCache { geom: g, cols, pre, out }))
    }

    fn direct(&self, x: &Tensor<T>, g: &Geometry) -> Tensor<T> {
        let k = self.kernel();
        let filters = self.filters();
        let w = self.weights.data();
        let xd = x.data();
        let mut pre = Vec::with_capacity(g.batch * g.out_h * g.out_w * filters);
        for n in 0..g.batch {
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    for f in 0..filters {
                        let mut acc = T::zero();
                        for ky in 0..k {
                            for kx in 0..k {
                                for c in 0..g.in_c {
                                    let wv = w[((ky * k + kx) * g.in_c + c) * filters + f];
                                    let xv = match (
                                        Self::source(oy, ky, self.stride, g.pad_top, g.in_h),
                                        Self::source(ox, kx, self.stride, g.pad_left, g.in_w),
                                    ) {
                                        (Some(iy), Some(ix)) => xd[((n * g.in_h + iy) * g.in_w + ix) * g.in_c + c],
                                        _ => T::zero(),
                                    };
                                    acc = acc + xv * wv;
                                }
                            }
                        }
                        pre.push(acc + self.bias.data()[f]);
                    }
                }
            }
        }
        Tensor::new(vec![g.batch * g.out_h * g.out_w, filters], pre).expect("direct conv shape")
    }

    pub fn backward(&self, cache: &Conv2DCache<T>, dy: &Tensor<T>) -> Result<ConvGrads<T>, LayerError> {
        let g = cache.geom;
        let filters = self.filters();
        let expected = [g.batch, g.out_h, g.out_w, filters];
        if dy.shape() != expected {
            return Err(LayerError::ShapeMismatch {
                layer: "conv2d",
                expected: expected.to_vec(),
                actual: dy.shape().to_vec(),
            });
        }
        let act = self.activation;
        let dpre_data: Vec<T> = dy
            .data()
            .iter()
            .zip(cache.pre.data().iter().zip(cache.out.data()))
            .map(|(&d, (&z, &y))| d * act.derivative(z, y))
            .collect();
        let dpre = Tensor::new(vec![g.batch * g.out_h * g.out_w, filters], dpre_data)?;

        let db = dpre.sum_rows()?;
        let dw = cache
            .cols
            .transpose2d()?
            .matmul(&dpre)?
            .into_reshape(self.weights.shape().to_vec())?;
        let dcols = dpre.matmul(&self.weight_matrix().transpose2d()?)?;

        // col2im: scatter each unrolled window back onto the input positions.
        let k = self.kernel();
        let row_len = k * k * g.in_c;
        let mut dx = vec![T::zero(); g.batch * g.in_h * g.in_w * g.in_c];
        let dcd = dcols.data();
        for n in 0..g.batch {
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    let r = (n * g.out_h + oy) * g.out_w + ox;
                    let row = &dcd[r * row_len..(r + 1) * row_len];
                    for ky in 0..k {
                        let Some(iy) = Self::source(oy, ky, self.stride, g.pad_top, g.in_h) else {
                            continue;
                        };
                        for kx in 0..k {
                            let Some(ix) = Self::source(ox, kx, self.stride, g.pad_left, g.in_w) else {
                                continue;
                            };
                            let dst = ((n * g.in_h + iy) * g.in_w + ix) * g.in_c;
                            let src = (ky * k + kx) * g.in_c;
                            for c in 0..g.in_c {
                                dx[dst + c] = dx[dst + c] + row[src + c];
                            }
                        }
                    }
                }
            }
        }
        Ok(ConvGrads {
            dx: Tensor::new(vec![g.batch, g.in_h, g.in_w, g.in_c], dx)?,
            dw,
            db,
        })
    }
}
