//! Versioned, CRC-protected weight files with a bit-exact round trip.
//!
//! Layout:
//!
//! ```text
//! "CNRM" | version u32 LE | header_len u32 LE | header (UTF-8 JSON ArchSpec)
//! | tensors as f32 LE | CRC32 (IEEE) u32 LE over everything before it
//! ```
//!
//! Tensor order is fixed: blocks 1..4, layers 1..3, each layer as conv
//! weights (O,I,k,k row-major), conv bias, gamma, beta, running mean, running
//! variance; finally head weights and head bias.

use crate::model::{build_model, ArchSpec, Mode, Model, ModelError};
use crate::rng::Rng;
use crate::tensor::Tensor;
use std::fs;
use std::path::Path;
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"CNRM";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum WeightFileError {
    #[error("bad magic bytes: expected \"CNRM\", got {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported weight file version {0} (expected {VERSION})")]
    UnsupportedVersion(u32),
    #[error("CRC mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    CrcMismatch { stored: u32, computed: u32 },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("payload holds {actual} tensor bytes but the header's architecture needs {expected}")]
    PayloadLength { expected: usize, actual: usize },
    #[error("file truncated: {0}")]
    Truncated(&'static str),
    #[error("weights contain non-finite values; refusing to save")]
    NonFinite,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Tensors in serialization order (includes running statistics).
fn serialized_tensors(model: &Model) -> Vec<&Tensor> {
    let mut out = Vec::new();
    for block in model.blocks() {
        for l in block {
            out.extend([
                &l.conv.weights,
                &l.conv.bias,
                &l.bn.gamma,
                &l.bn.beta,
                &l.bn.running_mean,
                &l.bn.running_var,
            ]);
        }
    }
    out.extend([&model.head().weights, &model.head().bias]);
    out
}

/// Total f32 count implied by an architecture, for payload validation.
fn expected_value_count(spec: &ArchSpec) -> usize {
    let mut count = 0;
    let mut in_ch = 3usize;
    for b in &spec.blocks {
        for l in 0..b.layers {
            let layer_in = in_ch + l * b.growth;
            count += b.growth * layer_in * b.kernel * b.kernel; // conv weights
            count += b.growth; // bias
            count += 4 * b.growth; // gamma, beta, running mean, running var
        }
        in_ch = b.growth;
    }
    count += spec.head.out_ch * in_ch * spec.head.kernel * spec.head.kernel + spec.head.out_ch;
    count
}

/// Serializes the model to the versioned byte format.
pub fn to_bytes(model: &Model) -> Result<Vec<u8>, WeightFileError> {
    let header =
        serde_json::to_string(model.spec()).map_err(|e| WeightFileError::MalformedHeader(e.to_string()))?;
    let tensors = serialized_tensors(model);
    if tensors.iter().any(|t| !t.is_finite()) {
        return Err(WeightFileError::NonFinite);
    }
    let mut bytes = Vec::with_capacity(16 + header.len() + 4 * tensors.iter().map(|t| t.len()).sum::<usize>());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&(header.len() as u32).to_le_bytes());
    bytes.extend_from_slice(header.as_bytes());
    for t in tensors {
        for v in t.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&bytes);
    bytes.extend_from_slice(&crc.to_le_bytes());
    Ok(bytes)
}

/// Parses the byte format back into a model (infer mode).
pub fn from_bytes(bytes: &[u8]) -> Result<Model, WeightFileError> {
    if bytes.len() < 12 {
        return Err(WeightFileError::Truncated("shorter than the fixed preamble"));
    }
    let magic: [u8; 4] = bytes[0..4].try_into().expect("sized");
    if &magic != MAGIC {
        return Err(WeightFileError::BadMagic(magic));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("sized"));
    if version != VERSION {
        return Err(WeightFileError::UnsupportedVersion(version));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().expect("sized")) as usize;
    if bytes.len() < 12 + header_len + 4 {
        return Err(WeightFileError::Truncated("header extends past end of file"));
    }
    let body_end = bytes.len() - 4;
    let stored = u32::from_le_bytes(bytes[body_end..].try_into().expect("sized"));
    let computed = crc32fast::hash(&bytes[..body_end]);
    if stored != computed {
        return Err(WeightFileError::CrcMismatch { stored, computed });
    }

    let header = std::str::from_utf8(&bytes[12..12 + header_len])
        .map_err(|e| WeightFileError::MalformedHeader(e.to_string()))?;
    let spec: ArchSpec =
        serde_json::from_str(header).map_err(|e| WeightFileError::MalformedHeader(e.to_string()))?;
    spec.validate()?;

    let payload = &bytes[12 + header_len..body_end];
    let expected = expected_value_count(&spec);
    if payload.len() != expected * 4 {
        return Err(WeightFileError::PayloadLength {
            expected: expected * 4,
            actual: payload.len(),
        });
    }

    // build_model fixes shapes; every value is then overwritten from the file
    let mut model = build_model(&spec, &mut Rng::new(0))?;
    let mut cursor = payload;
    let mut read_into = |t: &mut Tensor| {
        for v in t.data_mut() {
            let (chunk, rest) = cursor.split_at(4);
            *v = f32::from_le_bytes(chunk.try_into().expect("sized"));
            cursor = rest;
        }
    };
    for block in model.blocks_mut() {
        for l in block {
            read_into(&mut l.conv.weights);
            read_into(&mut l.conv.bias);
            read_into(&mut l.bn.gamma);
            read_into(&mut l.bn.beta);
            read_into(&mut l.bn.running_mean);
            read_into(&mut l.bn.running_var);
        }
    }
    read_into(&mut model.head_mut().weights);
    read_into(&mut model.head_mut().bias);
    model.set_mode(Mode::Infer);
    Ok(model)
}

pub fn save_weights(model: &Model, path: impl AsRef<Path>) -> Result<(), WeightFileError> {
    fs::write(path, to_bytes(model)?)?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<Model, WeightFileError> {
    from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> Model {
        build_model(&ArchSpec::reference(), &mut Rng::new(0xC0FFEE)).unwrap()
    }

    #[test]
    fn save_load_resave_is_byte_identical() {
        let m = model();
        let bytes = to_bytes(&m).unwrap();
        let loaded = from_bytes(&bytes).unwrap();
        assert_eq!(to_bytes(&loaded).unwrap(), bytes);
    }

    #[test]
    fn roundtrip_preserves_forward_output_bits() {
        let mut m = model();
        m.set_mode(Mode::Infer);
        let loaded = from_bytes(&to_bytes(&m).unwrap()).unwrap();
        let input = Tensor::full(&[1, 3, 17, 13], 0.37);
        assert_eq!(m.infer(&input).unwrap(), loaded.infer(&input).unwrap());
    }

    #[test]
    fn flipped_payload_byte_fails_crc() {
        let m = model();
        let mut bytes = to_bytes(&m).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x01;
        assert!(matches!(
            from_bytes(&bytes).unwrap_err(),
            WeightFileError::CrcMismatch { .. }
        ));
    }

    #[test]
    fn bad_magic_is_reported_first() {
        let m = model();
        let mut bytes = to_bytes(&m).unwrap();
        bytes[0] = b'X';
        assert!(matches!(
            from_bytes(&bytes).unwrap_err(),
            WeightFileError::BadMagic(_)
        ));
    }

    #[test]
    fn unsupported_version_is_named() {
        let m = model();
        let mut bytes = to_bytes(&m).unwrap();
        bytes[4] = 9;
        assert!(matches!(
            from_bytes(&bytes).unwrap_err(),
            WeightFileError::UnsupportedVersion(9)
        ));
    }

    #[test]
    fn header_payload_length_mismatch_is_detected() {
        let m = model();
        let bytes = to_bytes(&m).unwrap();
        // drop 4 payload bytes and re-seal with a fresh CRC so only the
        // length check can fire
        let mut clipped = bytes[..bytes.len() - 8].to_vec();
        let crc = crc32fast::hash(&clipped);
        clipped.extend_from_slice(&crc.to_le_bytes());
        assert!(matches!(
            from_bytes(&clipped).unwrap_err(),
            WeightFileError::PayloadLength { .. }
        ));
    }

    #[test]
    fn truncated_file_is_rejected() {
        assert!(matches!(
            from_bytes(&[0x43, 0x4E]).unwrap_err(),
            WeightFileError::Truncated(_)
        ));
    }
}
