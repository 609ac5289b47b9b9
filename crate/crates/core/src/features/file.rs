//! `SVFM` feature files: magic `SVFM`, then little-endian `u32` version (1),
//! `u32` dims, `u32` frames, and `dims * frames` `f32` values in row-major order.

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::nn::Tensor2D;
use std::io::Write;
use std::path::Path;

pub const FEATURE_MAGIC: &[u8; 4] = b"SVFM";
const VERSION: u32 = 1;

pub fn encode_features(f: &FeatureMatrix) -> Vec<u8> {
    let mut buf = Vec::with_capacity(16 + 4 * f.as_slice().len());
    buf.extend_from_slice(FEATURE_MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(f.rows() as u32).to_le_bytes());
    buf.extend_from_slice(&(f.cols() as u32).to_le_bytes());
    for &v in f.as_slice() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    buf
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureMatrix> {
    if bytes.len() < 16 || &bytes[..4] != FEATURE_MAGIC {
        return Err(Error::Format("not an SVFM feature file".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let version = word(4);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported SVFM version {version}")));
    }
    let (dims, frames) = (word(8) as usize, word(12) as usize);
    let body = &bytes[16..];
    if body.len() != 4 * dims * frames {
        return Err(Error::Format(format!(
            "SVFM payload of {} bytes does not match {dims}x{frames}",
            body.len()
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
        .collect();
    Tensor2D::from_vec(dims, frames, data)
}

pub fn write_feature_file(path: &Path, f: &FeatureMatrix) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(&encode_features(f))?;
    Ok(())
}

pub fn read_feature_file(path: &Path) -> Result<FeatureMatrix> {
    decode_features(&crate::binio::read_all(path)?).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}
