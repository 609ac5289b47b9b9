//! Aligner model files.
//!
//! `SVHM` (HMM): magic, `u32` version, phrase id (`u32` length + UTF-8
//! bytes), `u32` states, `u32` dims, then means (`states x dims`), variances
//! (`states x dims`) and per-state self-loop probabilities (`states`), all
//! little-endian `f64`.
//!
//! `SVGM` (GMM): magic, `u32` version, phrase id, `u32` components, `u32`
//! dims, then weights, means, variances, running mean (`components x dims`),
//! relevance factor and adaptation coefficient, all little-endian `f64`.

use crate::align::{PhraseGmm, PhraseHmm, RunningMean};
use crate::binio::{read_all, write_atomic, ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::nn::Tensor2D;
use std::path::Path;

pub const HMM_MAGIC: &[u8; 4] = b"SVHM";
pub const GMM_MAGIC: &[u8; 4] = b"SVGM";
const VERSION: u32 = 1;

fn check_version(v: u32, what: &str) -> Result<()> {
    if v != VERSION {
        return Err(Error::Format(format!("unsupported {what} version {v}")));
    }
    Ok(())
}

pub fn encode_hmm(hmm: &PhraseHmm) -> Vec<u8> {
    let mut w = ByteWriter::new(HMM_MAGIC, VERSION);
    w.str(&hmm.phrase_id);
    w.u32(hmm.states() as u32);
    w.u32(hmm.dims() as u32);
    w.f64s(hmm.means.as_slice());
    w.f64s(hmm.variances.as_slice());
    w.f64s(&hmm.self_loop);
    w.buf
}

pub fn decode_hmm(bytes: &[u8]) -> Result<PhraseHmm> {
    let (mut r, version) = ByteReader::open(bytes, HMM_MAGIC, "SVHM")?;
    check_version(version, "SVHM")?;
    let phrase_id = r.str()?;
    let q = r.u32()? as usize;
    let d = r.u32()? as usize;
    let means = Tensor2D::from_vec(q, d, r.f64s(q * d)?)?;
    let variances = Tensor2D::from_vec(q, d, r.f64s(q * d)?)?;
    let self_loop = r.f64s(q)?;
    r.finish()?;
    let hmm = PhraseHmm {
        phrase_id,
        means,
        variances,
        self_loop,
    };
    hmm.validate()?;
    Ok(hmm)
}

pub fn encode_gmm(gmm: &PhraseGmm, mu: &RunningMean, tau: f64) -> Vec<u8> {
    let mut w = ByteWriter::new(GMM_MAGIC, VERSION);
    w.str(&gmm.phrase_id);
    w.u32(gmm.components() as u32);
    w.u32(gmm.dims() as u32);
    w.f64s(&gmm.weights);
    w.f64s(gmm.means.as_slice());
    w.f64s(gmm.variances.as_slice());
    w.f64s(mu.means.as_slice());
    w.f64(tau);
    w.f64(mu.beta);
    w.buf
}

pub fn decode_gmm(bytes: &[u8]) -> Result<(PhraseGmm, RunningMean, f64)> {
    let (mut r, version) = ByteReader::open(bytes, GMM_MAGIC, "SVGM")?;
    check_version(version, "SVGM")?;
    let phrase_id = r.str()?;
    let c = r.u32()? as usize;
    let d = r.u32()? as usize;
    let weights = r.f64s(c)?;
    let means = Tensor2D::from_vec(c, d, r.f64s(c * d)?)?;
    let variances = Tensor2D::from_vec(c, d, r.f64s(c * d)?)?;
    let running = Tensor2D::from_vec(c, d, r.f64s(c * d)?)?;
    let tau = r.f64()?;
    let beta = r.f64()?;
    r.finish()?;
    let gmm = PhraseGmm {
        phrase_id,
        weights,
        means,
        variances,
    };
    gmm.validate()?;
    Ok((gmm, RunningMean::new(running, beta)?, tau))
}

pub fn write_hmm_file(path: &Path, hmm: &PhraseHmm) -> Result<()> {
    write_atomic(path, &encode_hmm(hmm))
}

pub fn read_hmm_file(path: &Path) -> Result<PhraseHmm> {
    decode_hmm(&read_all(path)?)
}

pub fn write_gmm_file(path: &Path, gmm: &PhraseGmm, mu: &RunningMean, tau: f64) -> Result<()> {
    write_atomic(path, &encode_gmm(gmm, mu, tau))
}

pub fn read_gmm_file(path: &Path) -> Result<(PhraseGmm, RunningMean, f64)> {
    decode_gmm(&read_all(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hmm_and_gmm_round_trip() {
        let hmm = PhraseHmm {
            phrase_id: "phr01".into(),
            means: Tensor2D::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
            variances: Tensor2D::filled(2, 2, 0.5),
            self_loop: vec![0.7, 1.0],
        };
        let bytes = encode_hmm(&hmm);
        assert_eq!(&bytes[..4], b"SVHM");
        assert_eq!(decode_hmm(&bytes).unwrap(), hmm);
        assert!(decode_hmm(&bytes[..bytes.len() - 1]).is_err());

        let gmm = PhraseGmm {
            phrase_id: "phr02".into(),
            weights: vec![0.25, 0.75],
            means: hmm.means.clone(),
            variances: hmm.variances.clone(),
        };
        let mu = RunningMean::new(hmm.means.clone(), 0.01).unwrap();
        let bytes = encode_gmm(&gmm, &mu, 10.0);
        assert_eq!(&bytes[..4], b"SVGM");
        let (g, m, tau) = decode_gmm(&bytes).unwrap();
        assert_eq!((g, m.means, m.beta, tau), (gmm, mu.means, 0.01, 10.0));
        assert!(decode_hmm(&bytes).is_err());
    }
}
