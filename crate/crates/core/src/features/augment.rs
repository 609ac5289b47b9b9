use crate::features::FeatureMatrix;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EraseFill {
    /// Mean of the whole input matrix.
    Mean,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErasingConfig {
    pub probability: f64,
    /// Range of the erased area as a fraction of the matrix area.
    pub area_range: (f64, f64),
    /// Lower bound of the height/width aspect ratio; the upper bound is its inverse.
    pub min_aspect: f64,
    pub fill: EraseFill,
}

impl Default for ErasingConfig {
    fn default() -> Self {
        Self {
            probability: 0.5,
            area_range: (0.02, 0.25),
            min_aspect: 0.3,
            fill: EraseFill::Mean,
        }
    }
}

/// Random Erasing: with probability `p` one random rectangle of the feature
/// matrix is overwritten with the fill value; everything outside it is
/// returned untouched.
pub fn random_erasing<R: Rng + ?Sized>(f: &FeatureMatrix, cfg: &ErasingConfig, rng: &mut R) -> FeatureMatrix {
    let mut out = f.clone();
    if cfg.probability <= 0.0 || rng.random::<f64>() >= cfg.probability {
        return out;
    }
    let (dims, frames) = f.shape();
    let total = (dims * frames) as f64;
    let (lo, hi) = cfg.area_range;
    let frac = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let area = (frac.clamp(0.0, 1.0) * total).max(1.0);
    let log_r = if cfg.min_aspect < 1.0 {
        rng.random_range(cfg.min_aspect.ln()..=(1.0 / cfg.min_aspect).ln())
    } else {
        0.0
    };
    let aspect = log_r.exp();
    let mut h = ((area * aspect).sqrt().round() as usize).clamp(1, dims);
    let w = ((area / h as f64).ceil() as usize).clamp(1, frames);
    if ((h * w) as f64) < area {
        h = ((area / w as f64).ceil() as usize).clamp(1, dims);
    }
    let top = rng.random_range(0..=dims - h);
    let left = rng.random_range(0..=frames - w);
    let value = match cfg.fill {
        EraseFill::Mean => f.mean(),
        EraseFill::Zero => 0.0,
    };
    for r in top..top + h {
        out.row_mut(r)[left..left + w].iter_mut().for_each(|v| *v = value);
    }
    out
}
