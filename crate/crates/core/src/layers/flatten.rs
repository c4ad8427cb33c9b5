use crate::layers::LayerError;
use crate::tensor::{Scalar, Tensor};

/// Collapses everything after the batch axis.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Flatten;

#[derive(Debug, Clone)]
pub struct FlattenCache {
    input_shape: Vec<usize>,
}

impl Flatten {
    pub fn forward<T: Scalar>(&self, x: &Tensor<T>) -> Result<(Tensor<T>, FlattenCache), LayerError> {
        let shape = x.shape().to_vec();
        let batch = shape.first().copied().unwrap_or(1);
        let width = shape.iter().skip(1).product();
        Ok((
            x.reshape(vec![batch, width])?,
            FlattenCache { input_shape: shape },
        ))
    }

    pub fn backward<T: Scalar>(&self, cache: &FlattenCache, dy: &Tensor<T>) -> Result<Tensor<T>, LayerError> {
        dy.reshape(cache.input_shape.clone()).map_err(|_| LayerError::ShapeMismatch {
            layer: "flatten",
            expected: cache.input_shape.clone(),
            actual: dy.shape().to_vec(),
        })
    }
}
