//! Binary checkpoint format.
//!
//! ```text
//! "DFDM"                      4 bytes magic
//! version                     u32 little-endian
//! header_len                  u32 little-endian
//! header                      header_len bytes of UTF-8 JSON (the ModelSpec)
//! parameters                  every parameter tensor in declaration order,
//!                             row-major little-endian IEEE-754 f32
//! crc32                       u32 little-endian over all preceding bytes
//! ```
//!
//! The header is serialized with a fixed field order, so saving the same model
//! twice produces identical bytes.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::models::{Model, ModelSpec};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DFDM";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint (bad magic bytes)")]
    BadMagic,
    #[error("unsupported checkpoint version {0} (this build reads version {CHECKPOINT_VERSION})")]
    UnsupportedVersion(u32),
    #[error("checkpoint is truncated or has trailing bytes: {0}")]
    Length(String),
    #[error("checkpoint CRC mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Crc { stored: u32, computed: u32 },
    #[error("checkpoint header is invalid: {0}")]
    Header(String),
}

impl CheckpointError {
    /// Stable short code for each failure class.
    pub fn code(&self) -> &'static str {
        match self {
            CheckpointError::Io(_) => "io",
            CheckpointError::BadMagic => "bad_magic",
            CheckpointError::UnsupportedVersion(_) => "bad_version",
            CheckpointError::Length(_) => "length",
            CheckpointError::Crc { .. } => "crc",
            CheckpointError::Header(_) => "header",
        }
    }
}

pub fn to_bytes(model: &Model<f32>) -> Vec<u8> {
    let header = serde_json::to_vec(model.spec()).expect("spec serializes");
    let params = model.params();
    let n: usize = params.iter().map(|p| p.len()).sum();
    let mut out = Vec::with_capacity(16 + header.len() + 4 * n);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for p in params {
        for v in p.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

pub fn from_bytes(bytes: &[u8]) -> Result<Model<f32>, CheckpointError> {
    if bytes.len() < 4 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    if bytes.len() < 16 {
        return Err(CheckpointError::Length(format!("{} bytes is shorter than the fixed framing", bytes.len())));
    }
    let body = &bytes[..bytes.len() - 4];
    let stored = u32_at(bytes, bytes.len() - 4);
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(CheckpointError::Crc { stored, computed });
    }
    let version = u32_at(bytes, 4);
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let header_len = u32_at(bytes, 8) as usize;
    let header_end = 12usize
        .checked_add(header_len)
        .filter(|&e| e <= body.len())
        .ok_or_else(|| CheckpointError::Length(format!("header length {header_len} overruns the file")))?;
    let spec: ModelSpec =
        serde_json::from_slice(&body[12..header_end]).map_err(|e| CheckpointError::Header(e.to_string()))?;

    let mut payload = &body[header_end..];
    let shapes = param_shapes(&spec)?;
    let expected: usize = shapes.iter().map(|s| s.iter().product::<usize>()).sum::<usize>() * 4;
    if payload.len() != expected {
        return Err(CheckpointError::Length(format!(
            "parameter payload is {} bytes, spec requires {expected}",
            payload.len()
        )));
    }
    let mut params = Vec::with_capacity(shapes.len());
    for shape in shapes {
        let n: usize = shape.iter().product();
        let (chunk, rest) = payload.split_at(4 * n);
        payload = rest;
        let data = chunk
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        params.push(Tensor::new(shape, data).map_err(|e| CheckpointError::Header(e.to_string()))?);
    }
    Model::from_parts(spec, params).map_err(|e| CheckpointError::Header(e.to_string()))
}

fn param_shapes(spec: &ModelSpec) -> Result<Vec<Vec<usize>>, CheckpointError> {
    use crate::layers::LayerSpec;
    spec.chain().map_err(|e| CheckpointError::Header(e.to_string()))?;
    let mut shapes = Vec::new();
    for layer in &spec.layers {
        match *layer {
            LayerSpec::Conv2d {
                in_channels,
                filters,
                kernel,
                ..
            } => {
                shapes.push(vec![kernel, kernel, in_channels, filters]);
                shapes.push(vec![filters]);
            }
            LayerSpec::Dense { inputs, units, .. } => {
                shapes.push(vec![inputs, units]);
                shapes.push(vec![units]);
            }
            _ => {}
        }
    }
    Ok(shapes)
}

pub fn save_checkpoint(model: &Model<f32>, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    fs::write(path, to_bytes(model))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model<f32>, CheckpointError> {
    from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Hyper, ModelKind};
    use crate::rng::Rng;

    fn model() -> Model<f32> {
        let hyper = Hyper {
            filters: 4,
            hidden_units: 8,
            ..Hyper::default()
        };
        Model::build(ModelKind::CnnSigmoid, [12, 12, 3], &hyper, 5).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model();
        let bytes = to_bytes(&m);
        let back = from_bytes(&bytes).unwrap();
        let x: Tensor<f32> = Rng::new(0).uniform(vec![4, 12, 12, 3], 0.0, 1.0).unwrap();
        let a: Vec<u32> = m.predict(&x).unwrap().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u32> = back.predict(&x).unwrap().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
        assert_eq!(to_bytes(&back), bytes);
    }

    #[test]
    fn framing_is_as_documented() {
        let bytes = to_bytes(&model());
        assert_eq!(&bytes[..4], b"DFDM");
        assert_eq!(u32_at(&bytes, 4), 1);
        let header_len = u32_at(&bytes, 8) as usize;
        let header: serde_json::Value = serde_json::from_slice(&bytes[12..12 + header_len]).unwrap();
        assert_eq!(header["kind"], "cnn_sigmoid");
        let params = model().param_count();
        assert_eq!(bytes.len(), 12 + header_len + 4 * params + 4);
    }

    #[test]
    fn truncation_is_detected() {
        let bytes = to_bytes(&model());
        for cut in [0, 3, 10, bytes.len() / 2, bytes.len() - 1] {
            let err = from_bytes(&bytes[..cut]).unwrap_err();
            assert!(
                matches!(err, CheckpointError::Crc { .. } | CheckpointError::Length(_) | CheckpointError::BadMagic),
                "cut {cut}: {err}"
            );
        }
    }

    #[test]
    fn flipped_payload_byte_fails_crc() {
        let mut bytes = to_bytes(&model());
        let i = bytes.len() - 40;
        bytes[i] ^= 0x01;
        assert!(matches!(from_bytes(&bytes), Err(CheckpointError::Crc { .. })));
    }

    #[test]
    fn distinct_errors_for_magic_and_version() {
        let mut bytes = to_bytes(&model());
        bytes[0] = b'X';
        assert_eq!(from_bytes(&bytes).unwrap_err().code(), "bad_magic");

        let mut bytes = to_bytes(&model());
        bytes[4] = 9;
        let n = bytes.len();
        let crc = crc32fast::hash(&bytes[..n - 4]);
        bytes[n - 4..].copy_from_slice(&crc.to_le_bytes());
        assert_eq!(from_bytes(&bytes).unwrap_err().code(), "bad_version");
    }
}
