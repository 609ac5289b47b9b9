use crate::align::SoftAlignment;
use crate::error::{input_err, shape_err, Result};
use crate::features::FeatureMatrix;
use crate::nn::Tensor2D;
use crate::rng::substream;
use rand::seq::index::sample;
use std::f64::consts::PI;

/// Diagonal-covariance Gaussian mixture of one phrase.
#[derive(Debug, Clone, PartialEq)]
pub struct PhraseGmm {
    pub phrase_id: String,
    pub weights: Vec<f64>,
    /// `components x dims`
    pub means: Tensor2D,
    /// `components x dims`
    pub variances: Tensor2D,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmmTrainConfig {
    pub components: usize,
    pub iterations: usize,
    /// Hard k-means passes run on the seed frames before EM.
    pub kmeans_iterations: usize,
    pub variance_floor: f64,
    pub seed: u64,
}

impl Default for GmmTrainConfig {
    fn default() -> Self {
        Self {
            components: 64,
            iterations: 20,
            kmeans_iterations: 5,
            variance_floor: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GmmTrace {
    /// Data log-likelihood after each EM update.
    pub log_likelihoods: Vec<f64>,
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

impl PhraseGmm {
    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dims(&self) -> usize {
        self.means.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.components();
        if c == 0 || self.means.rows() != c || self.variances.shape() != self.means.shape() {
            return Err(shape_err!("inconsistent GMM parameter shapes"));
        }
        if (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 || self.weights.iter().any(|&w| w < 0.0) {
            return Err(input_err!("GMM weights do not form a simplex"));
        }
        if self.variances.as_slice().iter().any(|&v| !(v > 0.0)) {
            return Err(input_err!("GMM variances must be positive"));
        }
        Ok(())
    }

    /// `frames x components` matrix of `log w_c + log N(x_t; mu_c, Sigma_c)`.
    pub fn log_joint(&self, x: &FeatureMatrix) -> Result<Tensor2D> {
        if x.rows() != self.dims() {
            return Err(shape_err!(
                "GMM for {}-dim features applied to {}-dim input",
                self.dims(),
                x.rows()
            ));
        }
        let (c, frames) = (self.components(), x.cols());
        let mut out = Tensor2D::zeros(frames, c);
        for k in 0..c {
            let mean = self.means.row(k);
            let var = self.variances.row(k);
            let norm: f64 = var.iter().map(|v| (2.0 * PI * v).ln()).sum();
            let mut acc = vec![self.weights[k].ln() - 0.5 * norm; frames];
            for d in 0..self.dims() {
                let (m, inv) = (mean[d], 1.0 / var[d]);
                for (a, &v) in acc.iter_mut().zip(x.row(d)) {
                    *a -= 0.5 * (v - m) * (v - m) * inv;
                }
            }
            for (t, a) in acc.into_iter().enumerate() {
                out.set(t, k, a);
            }
        }
        Ok(out)
    }

    /// Frame posteriors, normalised with log-sum-exp.
    pub fn posteriors(&self, x: &FeatureMatrix) -> Result<SoftAlignment> {
        Ok(self.posteriors_with_likelihood(x)?.0)
    }

    fn posteriors_with_likelihood(&self, x: &FeatureMatrix) -> Result<(SoftAlignment, f64)> {
        let mut joint = self.log_joint(x)?;
        let mut total = 0.0;
        for t in 0..joint.rows() {
            let row = joint.row_mut(t);
            let lse = log_sum_exp(row);
            total += lse;
            row.iter_mut().for_each(|v| *v = (*v - lse).exp());
        }
        Ok((SoftAlignment::new(joint)?, total))
    }

    pub fn log_likelihood(&self, x: &FeatureMatrix) -> Result<f64> {
        Ok(self.posteriors_with_likelihood(x)?.1)
    }
}

fn gather_frames(utterances: &[&FeatureMatrix]) -> Vec<Vec<f64>> {
    utterances
        .iter()
        .flat_map(|f| (0..f.cols()).map(move |t| f.column(t)))
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// EM training of a diagonal GMM on the pooled frames of one phrase.
///
/// Means are seeded from distinct random frames (seeded stream `gmm-init`)
/// refined by a few hard k-means passes; EM then never decreases the data
/// log-likelihood.
pub fn train_gmm(
    phrase_id: &str,
    utterances: &[&FeatureMatrix],
    cfg: &GmmTrainConfig,
) -> Result<(PhraseGmm, GmmTrace)> {
    let c = cfg.components;
    if c == 0 {
        return Err(input_err!("GMM needs at least one component"));
    }
    let dims = utterances.first().map_or(0, |f| f.rows());
    if utterances.iter().any(|f| f.rows() != dims) {
        return Err(shape_err!("phrase {phrase_id}: utterances differ in feature dimension"));
    }
    let frames = gather_frames(utterances);
    let n = frames.len();
    if n < 10 * c {
        return Err(input_err!(
            "phrase {phrase_id}: {n} frames are too few for {c} components (need {})",
            10 * c
        ));
    }

    let mut rng = substream(cfg.seed, &format!("gmm-init/{phrase_id}"));
    let mut centres: Vec<Vec<f64>> = sample(&mut rng, n, c).into_iter().map(|i| frames[i].clone()).collect();
    let mut assign = vec![0usize; n];
    for _ in 0..cfg.kmeans_iterations {
        for (a, x) in assign.iter_mut().zip(&frames) {
            *a = (0..c)
                .min_by(|&i, &j| sq_dist(x, &centres[i]).total_cmp(&sq_dist(x, &centres[j])))
                .expect("nonempty");
        }
        let mut sums = vec![vec![0.0; dims]; c];
        let mut counts = vec![0usize; c];
        for (&a, x) in assign.iter().zip(&frames) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(x) {
                *s += v;
            }
        }
        for k in 0..c {
            if counts[k] > 0 {
                centres[k] = sums[k].iter().map(|s| s / counts[k] as f64).collect();
            }
        }
    }

    let global_mean: Vec<f64> = (0..dims).map(|d| frames.iter().map(|x| x[d]).sum::<f64>() / n as f64).collect();
    let global_var: Vec<f64> = (0..dims)
        .map(|d| {
            (frames.iter().map(|x| (x[d] - global_mean[d]).powi(2)).sum::<f64>() / n as f64)
                .max(cfg.variance_floor)
        })
        .collect();
    let mut gmm = PhraseGmm {
        phrase_id: phrase_id.to_string(),
        weights: vec![1.0 / c as f64; c],
        means: Tensor2D::from_rows(&centres)?,
        variances: Tensor2D::from_rows(&vec![global_var; c])?,
    };

    let data = Tensor2D::from_rows(&frames)?.transpose();
    let mut trace = GmmTrace::default();
    let (mut post, _) = gmm.posteriors_with_likelihood(&data)?;
    for _ in 0..cfg.iterations {
        m_step(&mut gmm, &data, &post, cfg.variance_floor);
        let (p, ll) = gmm.posteriors_with_likelihood(&data)?;
        trace.log_likelihoods.push(ll);
        post = p;
    }
    Ok((gmm, trace))
}

fn m_step(gmm: &mut PhraseGmm, data: &Tensor2D, post: &SoftAlignment, floor: f64) {
    let (dims, n) = data.shape();
    let gamma = post.matrix();
    let occ = post.occupancy();
    for k in 0..gmm.components() {
        let nk = occ[k];
        gmm.weights[k] = nk / n as f64;
        if nk <= 0.0 {
            // dead component: weight 0, parameters left in place
            continue;
        }
        for d in 0..dims {
            let row = data.row(d);
            let mean = (0..n).map(|t| gamma.get(t, k) * row[t]).sum::<f64>() / nk;
            let var = (0..n).map(|t| gamma.get(t, k) * (row[t] - mean).powi(2)).sum::<f64>() / nk;
            gmm.means.set(k, d, mean);
            gmm.variances.set(k, d, var.max(floor));
        }
    }
    let total: f64 = gmm.weights.iter().sum();
    gmm.weights.iter_mut().for_each(|w| *w /= total);
}
