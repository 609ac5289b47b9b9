//! Central finite-difference gradient checking.
//!
//! Used by the unit tests and the acceptance suite as the independent oracle
//! for every hand-written backward pass.

use crate::nn::Tensor2D;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub const DEFAULT_STEP: f64 = 1e-3;

/// Central differences of `f` at `x` with step `h`.
pub fn numeric_gradient(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Norm-wise relative error `|a - b| / max(|a|, |b|)`, zero when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nb = numeric.iter().map(|b| b * b).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

/// Relative error of `analytic` against central differences of `f` at `x`.
pub fn gradient_error(x: &[f64], analytic: &[f64], f: impl FnMut(&[f64]) -> f64) -> f64 {
    let numeric = numeric_gradient(x, DEFAULT_STEP, f);
    relative_error(analytic, &numeric)
}

pub fn random_vec<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn random_tensor<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor2D {
    Tensor2D::from_vec(rows, cols, random_vec(rows * cols, rng)).expect("sized")
}
