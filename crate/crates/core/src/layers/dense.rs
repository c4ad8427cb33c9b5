use crate::layers::{glorot, Activation, LayerError};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

/// Fully connected layer `y = act(x W + b)` with an optional L2 penalty on `W`.
#[derive(Debug, Clone)]
pub struct Dense<T> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
    pub activation: Activation,
    pub l2: f64,
}

#[derive(Debug, Clone)]
pub struct DenseCache<T> {
    input: Tensor<T>,
    pre: Tensor<T>,
    out: Tensor<T>,
}

impl<T: Scalar> DenseCache<T> {
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

pub struct DenseGrads<T> {
    pub dx: Tensor<T>,
    pub dw: Tensor<T>,
    pub db: Tensor<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(inputs: usize, units: usize, activation: Activation, l2: f64, rng: &mut Rng) -> Result<Self, LayerError> {
        if inputs == 0 || units == 0 {
            return Err(LayerError::Config {
                layer: "dense",
                reason: "inputs and units must be positive".into(),
            });
        }
        Self::check_l2(l2)?;
        Ok(Self {
            weights: glorot(vec![inputs, units], inputs, units, rng)?,
            bias: Tensor::zeros(vec![units])?,
            activation,
            l2,
        })
    }

    pub fn from_params(weights: Tensor<T>, bias: Tensor<T>, activation: Activation, l2: f64) -> Result<Self, LayerError> {
        Self::check_l2(l2)?;
        if !matches!(weights.shape(), &[_, u] if bias.shape() == [u]) {
            return Err(LayerError::Config {
                layer: "dense",
                reason: format!("weights {:?} and bias {:?} disagree", weights.shape(), bias.shape()),
            });
        }
        Ok(Self {
            weights,
            bias,
            activation,
            l2,
        })
    }

    fn check_l2(l2: f64) -> Result<(), LayerError> {
        if !(l2 >= 0.0 && l2.is_finite()) {
            return Err(LayerError::Config {
                layer: "dense",
                reason: format!("l2 coefficient {l2} must be a nonnegative number"),
            });
        }
        Ok(())
    }

    pub fn inputs(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn units(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn cast<U: Scalar>(&self) -> Dense<U> {
        Dense {
            weights: self.weights.cast(),
            bias: self.bias.cast(),
            activation: self.activation,
            l2: self.l2,
        }
    }

    /// `l2 * sum(W^2)`; the bias is not regularized.
    pub fn l2_penalty(&self) -> T {
        if self.l2 == 0.0 {
            return T::zero();
        }
        T::of(self.l2) * self.weights.sum_squares()
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, DenseCache<T>), LayerError> {
        let width = match x.shape() {
            &[_, w] => w,
            s => {
                return Err(LayerError::ShapeMismatch {
                    layer: "dense",
                    expected: vec![0, self.inputs()],
                    actual: s.to_vec(),
                })
            }
        };
        if width != self.inputs() {
            return Err(LayerError::WidthMismatch {
                layer: "dense",
                expected: self.inputs(),
                actual: width,
            });
        }
        let mut pre = x.matmul(&self.weights)?;
        let units = self.units();
        for row in pre.data_mut().chunks_mut(units) {
            for (v, &b) in row.iter_mut().zip(self.bias.data()) {
                *v = *v + b;
            }
        }
        let act = self.activation;
        let out = pre.map(|z| act.apply(z));
        Ok((
            out.clone(),
            DenseCache {
                input: x.clone(),
                pre,
                out,
            },
        ))
    }

    pub fn backward(&self, cache: &DenseCache<T>, dy: &Tensor<T>) -> Result<DenseGrads<T>, LayerError> {
        if dy.shape() != cache.out.shape() {
            return Err(LayerError::ShapeMismatch {
                layer: "dense",
                expected: cache.out.shape().to_vec(),
                actual: dy.shape().to_vec(),
            });
        }
        let act = self.activation;
        let dpre_data = dy
            .data()
            .iter()
            .zip(cache.pre.data().iter().zip(cache.out.data()))
            .map(|(&d, (&z, &y))| d * act.derivative(z, y))
            .collect();
        let dpre = Tensor::new(dy.shape().to_vec(), dpre_data)?;
        let mut dw = cache.input.transpose2d()?.matmul(&dpre)?;
        if self.l2 != 0.0 {
            let two_l2 = T::of(2.0 * self.l2);
            for (g, &w) in dw.data_mut().iter_mut().zip(self.weights.data()) {
                *g = *g + two_l2 * w;
            }
        }
        Ok(DenseGrads {
            dx: dpre.matmul(&self.weights.transpose2d()?)?,
            dw,
            db: dpre.sum_rows()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights_pass_input_through() {
        let eye = Tensor::new(vec![3, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let d = Dense::from_params(eye, Tensor::zeros(vec![3]).unwrap(), Activation::Identity, 0.0).unwrap();
        let x: Tensor<f64> = Rng::new(0).uniform(vec![4, 3], -1.0, 1.0).unwrap();
        assert_eq!(d.forward(&x).unwrap().0, x);
    }

    #[test]
    fn sigmoid_of_zero_is_half() {
        let d = Dense::<f32>::from_params(
            Tensor::zeros(vec![2, 1]).unwrap(),
            Tensor::zeros(vec![1]).unwrap(),
            Activation::Sigmoid,
            0.0,
        )
        .unwrap();
        let x = Tensor::full(vec![1, 2], 3.0).unwrap();
        assert_eq!(d.forward(&x).unwrap().0.data(), &[0.5]);
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let d = Dense::<f32>::new(4, 2, Activation::Relu, 0.0, &mut Rng::new(0)).unwrap();
        let x = Tensor::zeros(vec![1, 3]).unwrap();
        assert!(matches!(d.forward(&x), Err(LayerError::WidthMismatch { .. })));
    }

    #[test]
    fn penalty_ignores_bias() {
        let d = Dense::<f64>::from_params(
            Tensor::new(vec![2, 1], vec![1.0, -2.0]).unwrap(),
            Tensor::full(vec![1], 100.0).unwrap(),
            Activation::Identity,
            0.5,
        )
        .unwrap();
        assert_eq!(d.l2_penalty(), 0.5 * 5.0);
    }

    #[test]
    fn glorot_init_is_bounded_and_seeded() {
        let a = Dense::<f32>::new(20, 30, Activation::Relu, 0.0, &mut Rng::new(5)).unwrap();
        let b = Dense::<f32>::new(20, 30, Activation::Relu, 0.0, &mut Rng::new(5)).unwrap();
        assert_eq!(a.weights, b.weights);
        let limit = (6.0f32 / 50.0).sqrt();
        assert!(a.weights.data().iter().all(|w| w.abs() <= limit));
        assert!(a.bias.data().iter().all(|&b| b == 0.0));
    }
}
