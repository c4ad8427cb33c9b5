//! Training-time augmentation: random horizontal flip, shear and zoom.
//!
//! Shear and zoom are one affine map about the image center. With centered
//! coordinates `(u, v) = (x - cx, y - cy)` the forward map is a shear
//! `u' = u + s*v` followed by isotropic scaling by `z`; each output pixel is
//! filled by pulling from the inverse map with bilinear sampling and
//! nearest-edge padding. The flip is an exact column reversal applied last.

use serde::{Deserialize, Serialize};

use crate::data::image::bilinear_at;
use crate::data::DataError;
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub flip_prob: f64,
    pub shear_max: f64,
    pub zoom_min: f64,
    pub zoom_max: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            flip_prob: 0.5,
            shear_max: 0.2,
            zoom_min: 0.8,
            zoom_max: 1.2,
        }
    }
}

impl AugmentConfig {
    /// Every knob at its neutral value.
    pub fn identity() -> Self {
        Self {
            flip_prob: 0.0,
            shear_max: 0.0,
            zoom_min: 1.0,
            zoom_max: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |msg: String| Err(DataError::Config(msg));
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return bad(format!("flip_prob {} must be in [0, 1]", self.flip_prob));
        }
        if !(self.shear_max >= 0.0 && self.shear_max.is_finite()) {
            return bad(format!("shear_max {} must be >= 0", self.shear_max));
        }
        if !(self.zoom_min > 0.0 && self.zoom_min <= 1.0 && self.zoom_max >= 1.0 && self.zoom_max.is_finite()) {
            return bad(format!(
                "zoom range [{}, {}] must be positive and bracket 1.0",
                self.zoom_min, self.zoom_max
            ));
        }
        Ok(())
    }
}

/// The concrete transform drawn for one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentDraw {
    pub flip: bool,
    pub shear: f64,
    pub zoom: f64,
}

impl AugmentDraw {
    /// Draw order is fixed (flip, shear, zoom) so streams stay stable.
    pub fn sample(cfg: &AugmentConfig, rng: &mut Rng) -> Self {
        let flip = rng.bernoulli(cfg.flip_prob);
        let shear = rng.uniform_scalar(-cfg.shear_max, cfg.shear_max);
        let zoom = rng.uniform_scalar(cfg.zoom_min, cfg.zoom_max);
        Self { flip, shear, zoom }
    }
}

pub fn augment(image: &Tensor<f32>, cfg: &AugmentConfig, rng: &mut Rng) -> Result<Tensor<f32>, DataError> {
    let draw = AugmentDraw::sample(cfg, rng);
    apply(image, draw)
}

pub fn apply(image: &Tensor<f32>, draw: AugmentDraw) -> Result<Tensor<f32>, DataError> {
    let &[h, w, 3] = image.shape() else {
        return Err(DataError::Shape(format!("expected [H, W, 3], got {:?}", image.shape())));
    };
    let mut out = if draw.shear == 0.0 && draw.zoom == 1.0 {
        image.clone()
    } else {
        shear_zoom(image, h, w, draw.shear, draw.zoom)
    };
    if draw.flip {
        out = flip_horizontal(&out)?;
    }
    Ok(out)
}

fn shear_zoom(image: &Tensor<f32>, h: usize, w: usize, shear: f64, zoom: f64) -> Tensor<f32> {
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let mut data = vec![0.0f32; h * w * 3];
    for y in 0..h {
        let v = (y as f64 - cy) / zoom;
        for x in 0..w {
            let u = (x as f64 - cx) / zoom - shear * v;
            let at = (y * w + x) * 3;
            let px = &mut data[at..at + 3];
            bilinear_at(image.data(), h, w, v + cy, u + cx, px);
            for c in px.iter_mut() {
                *c = c.clamp(0.0, 1.0);
            }
        }
    }
    Tensor::new(vec![h, w, 3], data).expect("same shape")
}

/// Mirrors columns of an `[H, W, C]` image.
pub fn flip_horizontal(image: &Tensor<f32>) -> Result<Tensor<f32>, DataError> {
    let &[h, w, c] = image.shape() else {
        return Err(DataError::Shape(format!("expected [H, W, C], got {:?}", image.shape())));
    };
    let src = image.data();
    let mut data = Vec::with_capacity(src.len());
    for y in 0..h {
        for x in (0..w).rev() {
            let at = (y * w + x) * c;
            data.extend_from_slice(&src[at..at + c]);
        }
    }
    Ok(Tensor::new(vec![h, w, c], data)?)
}
