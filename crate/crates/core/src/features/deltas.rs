use crate::error::{input_err, Result};
use crate::features::FeatureMatrix;
use crate::nn::Tensor2D;

/// Half-width of the regression window used for deltas.
pub const DELTA_WINDOW: usize = 2;

fn regression(f: &FeatureMatrix) -> FeatureMatrix {
    let frames = f.cols() as isize;
    let norm: f64 = 2.0 * (1..=DELTA_WINDOW).map(|n| (n * n) as f64).sum::<f64>();
    let mut out = Tensor2D::zeros(f.rows(), f.cols());
    for r in 0..f.rows() {
        let row = f.row(r);
        let at = |t: isize| row[t.clamp(0, frames - 1) as usize];
        for t in 0..frames {
            let num: f64 = (1..=DELTA_WINDOW as isize)
                .map(|n| n as f64 * (at(t + n) - at(t - n)))
                .sum();
            out.set(r, t as usize, num / norm);
        }
    }
    out
}

/// Stacks static features with first- and second-order regression deltas
/// (window +/-2, edge frames replicated), tripling the row count.
pub fn add_deltas(f: &FeatureMatrix) -> Result<FeatureMatrix> {
    if f.cols() < 2 * DELTA_WINDOW + 1 {
        return Err(input_err!(
            "deltas need at least {} frames, got {}",
            2 * DELTA_WINDOW + 1,
            f.cols()
        ));
    }
    let d1 = regression(f);
    let d2 = regression(&d1);
    let mut data = Vec::with_capacity(3 * f.as_slice().len());
    data.extend_from_slice(f.as_slice());
    data.extend_from_slice(d1.as_slice());
    data.extend_from_slice(d2.as_slice());
    Tensor2D::from_vec(3 * f.rows(), f.cols(), data)
}

/// Subtracts the per-row time average.
pub fn cepstral_mean_normalize(f: &mut FeatureMatrix) {
    for r in 0..f.rows() {
        let row = f.row_mut(r);
        let mean = row.iter().sum::<f64>() / row.len() as f64;
        row.iter_mut().for_each(|v| *v -= mean);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_features_have_zero_deltas() {
        let f = Tensor2D::filled(20, 9, 3.5);
        let d = add_deltas(&f).unwrap();
        assert_eq!(d.rows(), 60);
        assert_eq!(&d.as_slice()[..180], f.as_slice());
        assert!(d.as_slice()[180..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_ramp_has_unit_delta_and_zero_acceleration() {
        let mut f = Tensor2D::zeros(2, 16);
        for t in 0..16 {
            f.set(1, t, 0.5 * t as f64);
        }
        let d = add_deltas(&f).unwrap();
        // sum n * (n*0.5 + n*0.5) / (2 * 5) = 0.5 for n = 1, 2
        for t in 2..14 {
            assert!((d.get(3, t) - 0.5).abs() < 1e-12);
        }
        for t in 4..12 {
            assert!(d.get(5, t).abs() < 1e-12);
        }
    }

    #[test]
    fn short_input_is_rejected() {
        assert!(add_deltas(&Tensor2D::zeros(20, 4)).is_err());
    }

    #[test]
    fn mean_normalisation_centres_rows() {
        let mut f = Tensor2D::from_vec(1, 3, vec![1.0, 2.0, 6.0]).unwrap();
        cepstral_mean_normalize(&mut f);
        assert_eq!(f.as_slice(), &[-2.0, -1.0, 3.0]);
    }
}
