//! Image decoding to `[H, W, 3]` tensors in `[0, 1]`, and bilinear resizing.
//!
//! Binary PPM (P6) and PGM (P5) are parsed here directly; PNG and JPEG go
//! through the `image` crate. Grayscale inputs are replicated across the
//! three channels.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::data::DataError;
use crate::tensor::Tensor;

pub fn decode_image(path: impl AsRef<Path>) -> Result<Tensor<f32>, DataError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| DataError::decode(path, e.to_string()))?;
    decode_bytes(&bytes).map_err(|reason| DataError::decode(path, reason))
}

pub fn decode_bytes(bytes: &[u8]) -> Result<Tensor<f32>, String> {
    if bytes.is_empty() {
        return Err("empty file".into());
    }
    if bytes.starts_with(b"P6") || bytes.starts_with(b"P5") {
        return decode_netpbm(bytes);
    }
    let img = image::load_from_memory(bytes).map_err(|e| e.to_string())?;
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    let data = rgb.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
    Tensor::new(vec![h as usize, w as usize, 3], data).map_err(|e| e.to_string())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize, String> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format!("malformed PPM header: bad {what}"))
    }
}

fn decode_netpbm(bytes: &[u8]) -> Result<Tensor<f32>, String> {
    let channels = if bytes[1] == b'6' { 3 } else { 1 };
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err("zero image extent".into());
    }
    if !(1..=255).contains(&maxval) {
        return Err(format!("unsupported maxval {maxval} (8-bit only)"));
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(cur.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err("malformed PPM header".into());
    }
    let raster = &bytes[cur.pos + 1..];
    let need = width * height * channels;
    if raster.len() < need {
        return Err(format!("raster holds {} bytes, expected {need}", raster.len()));
    }
    let scale = maxval as f32;
    let mut data = Vec::with_capacity(width * height * 3);
    for px in raster[..need].chunks_exact(channels) {
        if channels == 3 {
            data.extend(px.iter().map(|&v| v as f32 / scale));
        } else {
            let v = px[0] as f32 / scale;
            data.extend([v, v, v]);
        }
    }
    Tensor::new(vec![height, width, 3], data).map_err(|e| e.to_string())
}

/// Quantizes to 8 bits and writes a binary PPM.
pub fn write_ppm(path: impl AsRef<Path>, image: &Tensor<f32>) -> std::io::Result<()> {
    let &[h, w, 3] = image.shape() else {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidInput,
            format!("expected [H, W, 3], got {:?}", image.shape()),
        ));
    };
    let mut out = Vec::with_capacity(20 + h * w * 3);
    write!(out, "P6\n{w} {h}\n255\n")?;
    out.extend(image.data().iter().map(|&v| to_u8(v)));
    fs::write(path, out)
}

pub fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Samples `image[y, x, c]` with bilinear interpolation at a fractional
/// position, clamping out-of-range coordinates to the nearest edge pixel.
pub(crate) fn bilinear_at(data: &[f32], h: usize, w: usize, y: f64, x: f64, out: &mut [f32]) {
    let y = y.clamp(0.0, (h - 1) as f64);
    let x = x.clamp(0.0, (w - 1) as f64);
    let y0 = y.floor() as usize;
    let x0 = x.floor() as usize;
    let y1 = (y0 + 1).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let fy = y - y0 as f64;
    let fx = x - x0 as f64;
    let px = |yy: usize, xx: usize, c: usize| data[(yy * w + xx) * 3 + c] as f64;
    for (c, o) in out.iter_mut().enumerate() {
        let top = px(y0, x0, c) + (px(y0, x1, c) - px(y0, x0, c)) * fx;
        let bottom = px(y1, x0, c) + (px(y1, x1, c) - px(y1, x0, c)) * fx;
        *o = (top + (bottom - top) * fy) as f32;
    }
}

/// Corner-aligned source coordinate for output index `o`.
fn aligned(o: usize, out_extent: usize, in_extent: usize) -> f64 {
    if out_extent == 1 {
        (in_extent - 1) as f64 / 2.0
    } else {
        o as f64 * (in_extent - 1) as f64 / (out_extent - 1) as f64
    }
}

/// Bilinear resize of an `[H, W, 3]` image with the corner-aligned
/// convention: output corners sample input corners exactly.
pub fn resize(image: &Tensor<f32>, height: usize, width: usize) -> Result<Tensor<f32>, DataError> {
    let &[h, w, 3] = image.shape() else {
        return Err(DataError::Shape(format!("expected [H, W, 3], got {:?}", image.shape())));
    };
    if height == 0 || width == 0 {
        return Err(DataError::Shape("resize target must be at least 1x1".into()));
    }
    if (h, w) == (height, width) {
        return Ok(image.clone());
    }
    let mut data = vec![0.0f32; height * width * 3];
    for oy in 0..height {
        let sy = aligned(oy, height, h);
        for ox in 0..width {
            let sx = aligned(ox, width, w);
            let at = (oy * width + ox) * 3;
            bilinear_at(image.data(), h, w, sy, sx, &mut data[at..at + 3]);
        }
    }
    Ok(Tensor::new(vec![height, width, 3], data)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decodes_hand_built_ppm() {
        let mut bytes = b"P6\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 0, 0, 255, 255, 255, 255, 0, 0, 0, 0, 255]);
        let t = decode_bytes(&bytes).unwrap();
        assert_eq!(t.shape(), &[2, 2, 3]);
        assert_eq!(
            t.data(),
            &[0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]
        );
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P6 # made by hand\n1 # w\n1\n255\n".to_vec();
        bytes.extend_from_slice(&[51, 102, 153]);
        let t = decode_bytes(&bytes).unwrap();
        assert_eq!(t.data(), &[0.2, 0.4, 0.6]);
    }

    #[test]
    fn grayscale_is_replicated() {
        let mut bytes = b"P5\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 255]);
        let t = decode_bytes(&bytes).unwrap();
        assert_eq!(t.data(), &[0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn corrupt_inputs_are_errors() {
        assert!(decode_bytes(b"").is_err());
        assert!(decode_bytes(b"P6\n2 2\n255\n\x00\x00").is_err());
        assert!(decode_bytes(b"P6\n2 2\n65535\n").is_err());
        assert!(decode_bytes(b"definitely not an image").is_err());
    }

    fn checkerboard() -> Tensor<f32> {
        let mut data = Vec::new();
        for y in 0..4 {
            for x in 0..4 {
                let v = ((x + y) % 2) as f32;
                data.extend([v, v, v]);
            }
        }
        Tensor::new(vec![4, 4, 3], data).unwrap()
    }

    #[test]
    fn resize_identity_and_constant() {
        let img = checkerboard();
        assert_eq!(resize(&img, 4, 4).unwrap(), img);
        let flat = Tensor::full(vec![5, 7, 3], 0.3f32).unwrap();
        let r = resize(&flat, 3, 11).unwrap();
        assert!(r.data().iter().all(|&v| v == 0.3));
    }

    #[test]
    fn resize_checkerboard_to_corners() {
        // 2x2 corner-aligned output samples input (0,0), (0,3), (3,0), (3,3).
        let r = resize(&checkerboard(), 2, 2).unwrap();
        let firsts: Vec<f32> = r.data().chunks(3).map(|p| p[0]).collect();
        assert_eq!(firsts, vec![0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn resize_checkerboard_to_3x3_interpolates() {
        // Output (1,1) samples (1.5, 1.5): the four neighbours are 0,1,1,0,
        // bilinear weights 1/4 each -> 0.5. Output (0,1) samples (0, 1.5): 1 and 0 -> 0.5.
        let r = resize(&checkerboard(), 3, 3).unwrap();
        let firsts: Vec<f32> = r.data().chunks(3).map(|p| p[0]).collect();
        assert_eq!(firsts, vec![0.0, 0.5, 1.0, 0.5, 0.5, 0.5, 1.0, 0.5, 0.0]);
    }
}
