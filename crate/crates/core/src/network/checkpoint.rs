use super::{ArchitectureConfig, Model};
use crate::align::RunningMean;
use crate::binio::{read_all, write_atomic, ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::nn::{Conv1d, Dense, LayerParams, Tensor2D};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SVCK";
const CHECKPOINT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

fn put_layer(w: &mut ByteWriter, p: &LayerParams) {
    w.u32(p.weights.rows() as u32);
    w.u32(p.weights.cols() as u32);
    w.f64s(p.weights.as_slice());
    w.f64s(&p.bias);
}

fn get_layer(r: &mut ByteReader<'_>) -> Result<LayerParams> {
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let weights = Tensor2D::from_vec(rows, cols, r.f64s(rows * cols)?)?;
    let bias = r.f64s(rows)?;
    LayerParams::new(weights, bias)
}

/// Serializes the architecture echo, every parameter tensor and the running
/// means, followed by a SHA-256 digest of all preceding bytes.
pub fn encode_checkpoint(model: &Model) -> Vec<u8> {
    let mut w = ByteWriter::new(CHECKPOINT_MAGIC, CHECKPOINT_VERSION);
    let pairs = model.config.to_pairs();
    w.u32(pairs.len() as u32);
    for (k, v) in &pairs {
        w.str(k);
        w.str(v);
    }
    for c in &model.convs {
        put_layer(&mut w, &c.params);
    }
    w.u32(model.head.is_some() as u32);
    if let Some(h) = &model.head {
        put_layer(&mut w, &h.params);
    }
    for d in &model.back_end {
        put_layer(&mut w, &d.params);
    }
    w.u32(model.running_means.len() as u32);
    for (phrase, rm) in &model.running_means {
        w.str(phrase);
        w.u32(rm.components() as u32);
        w.u32(rm.dims() as u32);
        w.f64(rm.beta);
        w.u64(rm.batches);
        w.f64s(rm.means.as_slice());
    }
    let digest = Sha256::digest(&w.buf);
    w.buf.extend_from_slice(&digest);
    w.buf
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Model> {
    if bytes.len() < 8 + DIGEST_LEN {
        return Err(Error::Format("checkpoint file is truncated".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Format("checkpoint checksum mismatch".into()));
    }
    let (mut r, version) = ByteReader::open(body, CHECKPOINT_MAGIC, "checkpoint")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let n = r.u32()? as usize;
    let mut pairs = Vec::with_capacity(n);
    for _ in 0..n {
        pairs.push((r.str()?, r.str()?));
    }
    let config = ArchitectureConfig::from_pairs(&pairs)?;
    config.validate()?;
    let mut convs = Vec::with_capacity(config.front_end.len());
    let mut channels = config.input_dims;
    for spec in &config.front_end {
        let conv = Conv1d::new(get_layer(&mut r)?, channels, spec.kernel)?;
        if conv.out_channels() != spec.channels {
            return Err(Error::Format("conv layer does not match the architecture echo".into()));
        }
        channels = spec.channels;
        convs.push(conv);
    }
    let head = match r.u32()? {
        0 => None,
        _ => Some(Dense::new(get_layer(&mut r)?)),
    };
    let mut back_end = Vec::with_capacity(config.back_end.len());
    for _ in &config.back_end {
        back_end.push(Dense::new(get_layer(&mut r)?));
    }
    let mut running_means = BTreeMap::new();
    for _ in 0..r.u32()? {
        let phrase = r.str()?;
        let c = r.u32()? as usize;
        let d = r.u32()? as usize;
        let beta = r.f64()?;
        let batches = r.u64()?;
        let means = Tensor2D::from_vec(c, d, r.f64s(c * d)?)?;
        let mut rm = RunningMean::new(means, beta)?;
        rm.batches = batches;
        running_means.insert(phrase, rm);
    }
    r.finish()?;
    Ok(Model {
        config,
        convs,
        head,
        back_end,
        running_means,
    })
}

pub fn save_checkpoint(path: &Path, model: &Model) -> Result<()> {
    write_atomic(path, &encode_checkpoint(model))
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    decode_checkpoint(&read_all(path)?)
}
