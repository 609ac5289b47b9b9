use crate::error::{input_err, Result};
use crate::features::FeatureMatrix;
use crate::nn::Tensor2D;

/// Linearly resamples every row onto `target` uniformly spaced points over
/// `[0, frames - 1]`. Both endpoints are reproduced exactly.
pub fn interpolate_time(f: &FeatureMatrix, target: usize) -> Result<FeatureMatrix> {
    if f.cols() < 2 {
        return Err(input_err!("interpolation needs at least 2 frames, got {}", f.cols()));
    }
    if target < 2 {
        return Err(input_err!("interpolation target must be at least 2 frames, got {target}"));
    }
    let last = f.cols() - 1;
    let positions: Vec<(usize, f64)> = (0..target)
        .map(|i| {
            let p = (i * last) as f64 / (target - 1) as f64;
            let i0 = (p.floor() as usize).min(last);
            (i0, p - i0 as f64)
        })
        .collect();
    let mut out = Tensor2D::zeros(f.rows(), target);
    for r in 0..f.rows() {
        let row = f.row(r);
        for (o, &(i0, frac)) in out.row_mut(r).iter_mut().zip(&positions) {
            *o = if i0 == last || frac == 0.0 {
                row[i0]
            } else {
                row[i0] + (row[i0 + 1] - row[i0]) * frac
            };
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_and_midpoint() {
        let f = Tensor2D::from_vec(2, 4, vec![1.0, -2.0, 3.0, 0.5, 4.0, 4.0, 4.0, 4.0]).unwrap();
        assert_eq!(interpolate_time(&f, 4).unwrap(), f);
        let g = Tensor2D::from_vec(1, 2, vec![0.0, 2.0]).unwrap();
        assert_eq!(interpolate_time(&g, 3).unwrap().as_slice(), &[0.0, 1.0, 2.0]);
        assert!(interpolate_time(&g, 1).is_err());
        assert!(interpolate_time(&Tensor2D::zeros(1, 1), 5).is_err());
    }

    proptest! {
        #[test]
        fn exact_on_affine_rows(
            a in -5.0f64..5.0, b in -5.0f64..5.0,
            raw in 2usize..40, target in 2usize..80,
        ) {
            let f = Tensor2D::from_vec(2, raw, (0..raw).map(|t| a + b * t as f64)
                .chain(std::iter::repeat_n(a, raw)).collect()).unwrap();
            let g = interpolate_time(&f, target).unwrap();
            prop_assert_eq!(g.get(0, 0), f.get(0, 0));
            prop_assert_eq!(g.get(0, target - 1), f.get(0, raw - 1));
            for i in 0..target {
                let p = (i * (raw - 1)) as f64 / (target - 1) as f64;
                prop_assert!((g.get(0, i) - (a + b * p)).abs() < 1e-9);
                prop_assert_eq!(g.get(1, i), a);
            }
        }
    }
}
