use crate::align::{HardAlignment, SoftAlignment, Supervector};
use crate::error::{input_err, shape_err, Error, Result};
use crate::nn::Tensor2D;

fn check_frames(x: &Tensor2D, frames: usize) -> Result<()> {
    if x.cols() != frames {
        return Err(shape_err!(
            "alignment covers {frames} frames but the input has {}",
            x.cols()
        ));
    }
    Ok(())
}

fn nonempty_occupancy(a: &HardAlignment) -> Result<Vec<usize>> {
    let occ = a.occupancy();
    if let Some(q) = occ.iter().position(|&n| n == 0) {
        return Err(Error::Domain(format!("state {q} has no frames assigned")));
    }
    Ok(occ)
}

/// Hard-alignment pooling: slot `q` is the mean of the frames assigned to state `q`.
pub fn hmm_pool(x: &Tensor2D, a: &HardAlignment) -> Result<Supervector> {
    check_frames(x, a.frames())?;
    let occ = nonempty_occupancy(a)?;
    let mut out = Supervector::zeros(a.states(), x.rows());
    for d in 0..x.rows() {
        for (&v, &q) in x.row(d).iter().zip(a.assignment()) {
            out.slot_mut(q)[d] += v;
        }
    }
    for (q, &n) in occ.iter().enumerate() {
        out.slot_mut(q).iter_mut().for_each(|v| *v /= n as f64);
    }
    Ok(out)
}

pub fn hmm_pool_backward(x: &Tensor2D, a: &HardAlignment, upstream: &Supervector) -> Result<Tensor2D> {
    check_frames(x, a.frames())?;
    if upstream.slots() != a.states() || upstream.dims() != x.rows() {
        return Err(shape_err!("upstream supervector shape mismatch"));
    }
    let occ = nonempty_occupancy(a)?;
    let mut grad = Tensor2D::zeros(x.rows(), x.cols());
    for d in 0..x.rows() {
        for (g, &q) in grad.row_mut(d).iter_mut().zip(a.assignment()) {
            *g = upstream.slot(q)[d] / occ[q] as f64;
        }
    }
    Ok(grad)
}

/// Global average over time, as a single-slot supervector.
pub fn average_pool(x: &Tensor2D) -> Supervector {
    let frames = x.cols() as f64;
    let means = (0..x.rows())
        .map(|d| x.row(d).iter().sum::<f64>() / frames)
        .collect();
    Supervector::from_flat(1, x.rows(), means).expect("sized")
}

pub fn average_pool_backward(x: &Tensor2D, upstream: &Supervector) -> Result<Tensor2D> {
    if upstream.as_slice().len() != x.rows() {
        return Err(shape_err!("upstream supervector shape mismatch"));
    }
    let frames = x.cols() as f64;
    let mut grad = Tensor2D::zeros(x.rows(), x.cols());
    for (d, &u) in upstream.as_slice().iter().enumerate() {
        grad.row_mut(d).iter_mut().for_each(|g| *g = u / frames);
    }
    Ok(grad)
}

/// Per-component running mean, updated batch-wise during training and frozen
/// for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningMean {
    /// `components x dims`
    pub means: Tensor2D,
    pub beta: f64,
    pub batches: u64,
}

impl RunningMean {
    pub fn new(means: Tensor2D, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::Config(format!("adaptation coefficient {beta} outside (0, 1]")));
        }
        Ok(Self {
            means,
            beta,
            batches: 0,
        })
    }

    pub fn components(&self) -> usize {
        self.means.rows()
    }

    pub fn dims(&self) -> usize {
        self.means.cols()
    }

    /// Exponential update towards the posterior-weighted mean of the batch
    /// frames. Components with no posterior mass in the batch keep their
    /// current value.
    pub fn update(&mut self, batch: &[(&Tensor2D, &SoftAlignment)]) -> Result<()> {
        if batch.is_empty() {
            return Err(input_err!("running-mean update with an empty batch"));
        }
        let (c, dims) = (self.components(), self.dims());
        let mut num = Tensor2D::zeros(c, dims);
        let mut den = vec![0.0; c];
        for (x, g) in batch {
            check_frames(x, g.frames())?;
            if x.rows() != dims || g.components() != c {
                return Err(shape_err!("running mean is {c}x{dims}, batch item is {}x{}", g.components(), x.rows()));
            }
            accumulate_weighted(x, g, &mut num, &mut den);
        }
        for k in 0..c {
            if den[k] <= 0.0 {
                continue;
            }
            for d in 0..dims {
                let f = num.get(k, d) / den[k];
                let m = self.means.get(k, d);
                self.means.set(k, d, (1.0 - self.beta) * m + self.beta * f);
            }
        }
        self.batches += 1;
        Ok(())
    }
}

/// Adds `sum_t x[d, t] * gamma_t(c)` into `num[c, d]` and `n_c` into `den[c]`.
fn accumulate_weighted(x: &Tensor2D, g: &SoftAlignment, num: &mut Tensor2D, den: &mut [f64]) {
    let gamma = g.matrix();
    let c = g.components();
    for t in 0..x.cols() {
        let w = gamma.row(t);
        for k in 0..c {
            den[k] += w[k];
        }
    }
    for d in 0..x.rows() {
        let row = x.row(d);
        for k in 0..c {
            let s: f64 = (0..x.cols()).map(|t| row[t] * gamma.get(t, k)).sum();
            let cur = num.get(k, d);
            num.set(k, d, cur + s);
        }
    }
}

fn check_map_inputs(x: &Tensor2D, g: &SoftAlignment, mu: &RunningMean, tau: f64) -> Result<Vec<f64>> {
    check_frames(x, g.frames())?;
    if mu.components() != g.components() || mu.dims() != x.rows() {
        return Err(shape_err!(
            "running mean is {}x{}, expected {}x{}",
            mu.components(),
            mu.dims(),
            g.components(),
            x.rows()
        ));
    }
    if !(tau >= 0.0) {
        return Err(Error::Config(format!("relevance factor {tau} must be non-negative")));
    }
    let occ = g.occupancy();
    if let Some(k) = occ.iter().position(|&n| n + tau <= 0.0) {
        return Err(Error::Domain(format!(
            "component {k} has no posterior mass and the relevance factor is zero"
        )));
    }
    Ok(occ)
}

/// MAP pooling: slot `c` is `(sum_t x_t gamma_t(c) + tau mu_c) / (n_c + tau)`.
pub fn map_pool(x: &Tensor2D, g: &SoftAlignment, mu: &RunningMean, tau: f64) -> Result<Supervector> {
    let occ = check_map_inputs(x, g, mu, tau)?;
    let (c, dims) = (g.components(), x.rows());
    let mut num = Tensor2D::zeros(c, dims);
    let mut den = vec![0.0; c];
    accumulate_weighted(x, g, &mut num, &mut den);
    let mut out = Supervector::zeros(c, dims);
    for k in 0..c {
        if occ[k] == 0.0 {
            // (0 + tau mu) / tau, without the rounding of the round trip
            out.slot_mut(k).copy_from_slice(mu.means.row(k));
            continue;
        }
        let denom = occ[k] + tau;
        for d in 0..dims {
            out.slot_mut(k)[d] = (num.get(k, d) + tau * mu.means.get(k, d)) / denom;
        }
    }
    Ok(out)
}

/// Gradient of [`map_pool`] with respect to `x`; posteriors and the running
/// mean are constants.
pub fn map_pool_backward(
    x: &Tensor2D,
    g: &SoftAlignment,
    mu: &RunningMean,
    tau: f64,
    upstream: &Supervector,
) -> Result<Tensor2D> {
    let occ = check_map_inputs(x, g, mu, tau)?;
    if upstream.slots() != g.components() || upstream.dims() != x.rows() {
        return Err(shape_err!("upstream supervector shape mismatch"));
    }
    let gamma = g.matrix();
    let c = g.components();
    let inv: Vec<f64> = occ.iter().map(|n| 1.0 / (n + tau)).collect();
    let mut grad = Tensor2D::zeros(x.rows(), x.cols());
    for d in 0..x.rows() {
        let up: Vec<f64> = (0..c).map(|k| upstream.slot(k)[d] * inv[k]).collect();
        for (t, gv) in grad.row_mut(d).iter_mut().enumerate() {
            *gv = gamma.row(t).iter().zip(&up).map(|(a, b)| a * b).sum();
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{gradient_error, random_tensor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_soft(frames: usize, c: usize, rng: &mut ChaCha8Rng) -> SoftAlignment {
        let mut m = Tensor2D::zeros(frames, c);
        for t in 0..frames {
            let raw: Vec<f64> = (0..c).map(|_| rng.random_range(0.01..1.0)).collect();
            let s: f64 = raw.iter().sum();
            for k in 0..c {
                m.set(t, k, raw[k] / s);
            }
            let s: f64 = m.row(t).iter().sum();
            m.row_mut(t)[0] += 1.0 - s;
        }
        SoftAlignment::new(m).unwrap()
    }

    #[test]
    fn hand_average() {
        let x = Tensor2D::from_vec(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        let a = HardAlignment::new(vec![0, 0, 1], 2).unwrap();
        assert_eq!(hmm_pool(&x, &a).unwrap().as_slice(), &[1.5, 3.0]);
    }

    #[test]
    fn single_state_is_global_average() {
        let x = random_tensor(4, 9, &mut ChaCha8Rng::seed_from_u64(60));
        let a = HardAlignment::new(vec![0; 9], 1).unwrap();
        assert_eq!(hmm_pool(&x, &a).unwrap(), average_pool(&x));
        let c = Tensor2D::filled(3, 5, 2.5);
        let b = HardAlignment::new(vec![0, 0, 1, 2, 2], 3).unwrap();
        assert!(hmm_pool(&c, &b).unwrap().as_slice().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn empty_state_is_a_domain_error() {
        let x = Tensor2D::zeros(2, 3);
        let a = HardAlignment::new(vec![0, 0, 2], 3).unwrap();
        assert!(matches!(hmm_pool(&x, &a), Err(Error::Domain(_))));
    }

    #[test]
    fn hmm_backward_distributes_by_occupancy() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let x = random_tensor(3, 8, &mut rng);
        let a = HardAlignment::new(vec![0, 0, 1, 1, 2, 2, 3, 3], 4).unwrap();
        let up = Supervector::from_flat(4, 3, vec![1.0; 12]).unwrap();
        let g = hmm_pool_backward(&x, &a, &up).unwrap();
        assert!(g.as_slice().iter().all(|&v| v == 0.5));
        let zero = hmm_pool_backward(&x, &a, &Supervector::zeros(4, 3)).unwrap();
        assert!(zero.as_slice().iter().all(|&v| v == 0.0));
        for _ in 0..20 {
            let up = Supervector::from_flat(4, 3, random_tensor(4, 3, &mut rng).into_vec()).unwrap();
            let g = hmm_pool_backward(&x, &a, &up).unwrap();
            let err = gradient_error(x.as_slice(), g.as_slice(), |v| {
                let y = hmm_pool(&Tensor2D::from_vec(3, 8, v.to_vec()).unwrap(), &a).unwrap();
                y.as_slice().iter().zip(up.as_slice()).map(|(p, q)| p * q).sum()
            });
            assert!(err <= 1e-4);
        }
    }

    #[test]
    fn map_pool_hand_example() {
        let x = Tensor2D::from_vec(1, 2, vec![2.0, 4.0]).unwrap();
        let g = SoftAlignment::new(Tensor2D::from_vec(2, 2, vec![1.0, 0.0, 0.5, 0.5]).unwrap()).unwrap();
        let mu = RunningMean::new(Tensor2D::zeros(2, 1), 0.01).unwrap();
        let y = map_pool(&x, &g, &mu, 1.0).unwrap();
        assert!((y.as_slice()[0] - 1.6).abs() < 1e-12);
        assert!((y.as_slice()[1] - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn map_pool_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let x = random_tensor(3, 10, &mut rng);
        let g = random_soft(10, 4, &mut rng);
        let mu = RunningMean::new(random_tensor(4, 3, &mut rng), 0.1).unwrap();
        let big = map_pool(&x, &g, &mu, 1e12).unwrap();
        assert!(big.as_slice().iter().zip(mu.means.as_slice()).all(|(a, b)| (a - b).abs() < 1e-6));

        let plain = map_pool(&x, &g, &mu, 0.0).unwrap();
        let occ = g.occupancy();
        for k in 0..4 {
            for d in 0..3 {
                let m: f64 = (0..10).map(|t| x.get(d, t) * g.matrix().get(t, k)).sum::<f64>() / occ[k];
                assert!((plain.slot(k)[d] - m).abs() < 1e-12);
            }
        }

        let hard = HardAlignment::new(vec![0, 1, 1, 2, 3, 3, 3, 0, 2, 1], 4).unwrap();
        assert_eq!(map_pool(&x, &hard.to_soft(), &mu, 0.0).unwrap(), hmm_pool(&x, &hard).unwrap());
    }

    #[test]
    fn zero_mass_component_takes_running_mean() {
        let x = random_tensor(2, 4, &mut ChaCha8Rng::seed_from_u64(63));
        let g = HardAlignment::new(vec![0, 0, 1, 1], 3).unwrap().to_soft();
        let mu = RunningMean::new(Tensor2D::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap(), 0.1).unwrap();
        let y = map_pool(&x, &g, &mu, 10.0).unwrap();
        assert_eq!(y.slot(2), &[5.0, 6.0]);
        assert!(matches!(map_pool(&x, &g, &mu, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn map_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(64);
        for _ in 0..20 {
            let x = random_tensor(3, 7, &mut rng);
            let g = random_soft(7, 4, &mut rng);
            let mu = RunningMean::new(random_tensor(4, 3, &mut rng), 0.1).unwrap();
            let tau = rng.random_range(0.0..20.0);
            let up = Supervector::from_flat(4, 3, random_tensor(4, 3, &mut rng).into_vec()).unwrap();
            let grad = map_pool_backward(&x, &g, &mu, tau, &up).unwrap();
            let err = gradient_error(x.as_slice(), grad.as_slice(), |v| {
                let y = map_pool(&Tensor2D::from_vec(3, 7, v.to_vec()).unwrap(), &g, &mu, tau).unwrap();
                y.as_slice().iter().zip(up.as_slice()).map(|(p, q)| p * q).sum()
            });
            assert!(err <= 1e-4);
        }
        // one-hot posteriors and tau = 0 reduce to the hard-alignment gradient
        let x = random_tensor(3, 6, &mut rng);
        let hard = HardAlignment::new(vec![0, 0, 1, 2, 2, 2], 3).unwrap();
        let mu = RunningMean::new(Tensor2D::zeros(3, 3), 0.1).unwrap();
        let up = Supervector::from_flat(3, 3, random_tensor(3, 3, &mut rng).into_vec()).unwrap();
        let a = map_pool_backward(&x, &hard.to_soft(), &mu, 0.0, &up).unwrap();
        let b = hmm_pool_backward(&x, &hard, &up).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-15);
        let tiny = map_pool_backward(&x, &hard.to_soft(), &mu, 1e12, &up).unwrap();
        assert!(tiny.as_slice().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn running_mean_updates() {
        let x = Tensor2D::filled(1, 3, 1.0);
        let g = HardAlignment::new(vec![0, 0, 0], 2).unwrap().to_soft();
        let mut mu = RunningMean::new(Tensor2D::zeros(2, 1), 0.1).unwrap();
        mu.update(&[(&x, &g)]).unwrap();
        assert!((mu.means.get(0, 0) - 0.1).abs() < 1e-15);
        assert_eq!(mu.means.get(1, 0), 0.0);
        assert_eq!(mu.batches, 1);
        for b in 2..=30 {
            mu.update(&[(&x, &g)]).unwrap();
            let expect = 1.0 - 0.9f64.powi(b);
            assert!((mu.means.get(0, 0) - expect).abs() < 1e-12);
        }
        let mut full = RunningMean::new(Tensor2D::zeros(2, 1), 1.0).unwrap();
        full.update(&[(&x, &g)]).unwrap();
        assert_eq!(full.means.get(0, 0), 1.0);
        assert!(full.update(&[]).is_err());
        assert!(RunningMean::new(Tensor2D::zeros(1, 1), 0.0).is_err());
    }
}
