use crate::align::{HardAlignment, StateSequence};
use crate::error::{input_err, shape_err, Result};
use crate::features::FeatureMatrix;
use crate::nn::Tensor2D;
use std::f64::consts::PI;

/// Left-to-right HMM of one phrase with one diagonal Gaussian per state.
///
/// Each non-final state `q` loops with probability `self_loop[q]` and
/// advances to `q + 1` otherwise; the final state loops with probability 1.
/// Decoding is forced to start in the first state and end in the last.
#[derive(Debug, Clone, PartialEq)]
pub struct PhraseHmm {
    pub phrase_id: String,
    /// `states x dims`
    pub means: Tensor2D,
    /// `states x dims`
    pub variances: Tensor2D,
    pub self_loop: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HmmTrainConfig {
    pub states: usize,
    pub iterations: usize,
    pub variance_floor: f64,
    /// Transition probabilities are kept inside `[floor, 1 - floor]`.
    pub transition_floor: f64,
}

impl Default for HmmTrainConfig {
    fn default() -> Self {
        Self {
            states: 40,
            iterations: 10,
            variance_floor: 1e-3,
            transition_floor: 1e-3,
        }
    }
}

/// Per-iteration record of segmental training.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HmmTrace {
    /// Total best-path log-likelihood after each realignment.
    pub log_likelihoods: Vec<f64>,
    /// Frames whose state changed in each realignment.
    pub changed_frames: Vec<usize>,
}

impl PhraseHmm {
    pub fn states(&self) -> usize {
        self.means.rows()
    }

    pub fn dims(&self) -> usize {
        self.means.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let q = self.states();
        if q == 0 || self.variances.shape() != self.means.shape() || self.self_loop.len() != q {
            return Err(shape_err!("inconsistent HMM parameter shapes"));
        }
        if self.variances.as_slice().iter().any(|&v| !(v > 0.0)) {
            return Err(input_err!("HMM variances must be positive"));
        }
        if self.self_loop[..q - 1].iter().any(|&a| !(0.0..1.0).contains(&a)) || self.self_loop[q - 1] != 1.0 {
            return Err(input_err!("invalid HMM transition probabilities"));
        }
        Ok(())
    }

    /// `frames x states` emission log-densities.
    pub fn emission_log_likelihoods(&self, f: &FeatureMatrix) -> Result<Tensor2D> {
        if f.rows() != self.dims() {
            return Err(shape_err!(
                "HMM for {}-dim features applied to {}-dim input",
                self.dims(),
                f.rows()
            ));
        }
        let (q, d, frames) = (self.states(), self.dims(), f.cols());
        let mut out = Tensor2D::zeros(frames, q);
        for s in 0..q {
            let mean = self.means.row(s);
            let var = self.variances.row(s);
            let norm: f64 = var.iter().map(|v| (2.0 * PI * v).ln()).sum();
            let mut acc = vec![-0.5 * norm; frames];
            for k in 0..d {
                let (m, inv) = (mean[k], 1.0 / var[k]);
                for (a, &x) in acc.iter_mut().zip(f.row(k)) {
                    *a -= 0.5 * (x - m) * (x - m) * inv;
                }
            }
            for (t, a) in acc.into_iter().enumerate() {
                out.set(t, s, a);
            }
        }
        Ok(out)
    }

    pub fn log_transitions(&self) -> (Vec<f64>, Vec<f64>) {
        let stay = self.self_loop.iter().map(|a| a.ln()).collect();
        let advance = self.self_loop.iter().map(|a| (1.0 - a).ln()).collect();
        (stay, advance)
    }

    /// Best left-to-right path and its log-probability.
    ///
    /// On equal scores the backtrace prefers the self-loop, so among tied
    /// paths the one that is larger when compared from the last frame
    /// backwards wins.
    pub fn viterbi_decode(&self, f: &FeatureMatrix) -> Result<(StateSequence, f64)> {
        let emissions = self.emission_log_likelihoods(f)?;
        viterbi_from_emissions(&emissions, &self.self_loop)
    }

    pub fn align(&self, f: &FeatureMatrix) -> Result<HardAlignment> {
        let (q, _) = self.viterbi_decode(f)?;
        HardAlignment::from_sequence(&q, self.states())
    }
}

/// Viterbi over precomputed `frames x states` emission log-densities.
pub fn viterbi_from_emissions(emissions: &Tensor2D, self_loop: &[f64]) -> Result<(StateSequence, f64)> {
    let (frames, states) = emissions.shape();
    if frames < states {
        return Err(input_err!(
            "{frames} frames cannot visit all {states} left-to-right states"
        ));
    }
    let stay: Vec<f64> = self_loop.iter().map(|a| a.ln()).collect();
    let advance: Vec<f64> = self_loop.iter().map(|a| (1.0 - a).ln()).collect();
    let mut score = vec![f64::NEG_INFINITY; states];
    let mut next = vec![f64::NEG_INFINITY; states];
    let mut back = vec![0u8; frames * states];
    score[0] = emissions.get(0, 0);
    for t in 1..frames {
        // states reachable at t and still able to reach the end
        let lo = (states + t).saturating_sub(frames);
        let hi = t.min(states - 1);
        next.iter_mut().for_each(|v| *v = f64::NEG_INFINITY);
        for q in lo..=hi {
            let from_stay = score[q] + stay[q];
            let from_adv = if q > 0 {
                score[q - 1] + advance[q - 1]
            } else {
                f64::NEG_INFINITY
            };
            let e = emissions.get(t, q);
            if from_stay >= from_adv {
                next[q] = from_stay + e;
            } else {
                next[q] = from_adv + e;
                back[t * states + q] = 1;
            }
        }
        std::mem::swap(&mut score, &mut next);
    }
    let best = score[states - 1];
    if !best.is_finite() {
        return Err(input_err!("no finite-probability left-to-right path"));
    }
    let mut path = vec![0; frames];
    let mut q = states - 1;
    for t in (0..frames).rev() {
        path[t] = q;
        if t > 0 && back[t * states + q] == 1 {
            q -= 1;
        }
    }
    Ok((StateSequence(path), best))
}

fn uniform_segmentation(frames: usize, states: usize) -> Vec<usize> {
    (0..frames).map(|t| t * states / frames).collect()
}

fn reestimate(
    utterances: &[&FeatureMatrix],
    paths: &[Vec<usize>],
    cfg: &HmmTrainConfig,
    phrase_id: &str,
) -> PhraseHmm {
    let (q, d) = (cfg.states, utterances[0].rows());
    let mut count = vec![0usize; q];
    let mut sum = Tensor2D::zeros(q, d);
    for (f, path) in utterances.iter().zip(paths) {
        for (t, &s) in path.iter().enumerate() {
            count[s] += 1;
            for k in 0..d {
                sum.row_mut(s)[k] += f.get(k, t);
            }
        }
    }
    let mut means = sum;
    for s in 0..q {
        let n = count[s].max(1) as f64;
        means.row_mut(s).iter_mut().for_each(|v| *v /= n);
    }
    let mut variances = Tensor2D::zeros(q, d);
    for (f, path) in utterances.iter().zip(paths) {
        for (t, &s) in path.iter().enumerate() {
            for k in 0..d {
                let dev = f.get(k, t) - means.get(s, k);
                variances.row_mut(s)[k] += dev * dev;
            }
        }
    }
    for s in 0..q {
        let n = count[s].max(1) as f64;
        variances
            .row_mut(s)
            .iter_mut()
            .for_each(|v| *v = (*v / n).max(cfg.variance_floor));
    }
    // every utterance leaves each non-final state exactly once
    let exits = utterances.len() as f64;
    let mut self_loop: Vec<f64> = count
        .iter()
        .map(|&n| {
            let n = n as f64;
            ((n - exits) / n).clamp(cfg.transition_floor, 1.0 - cfg.transition_floor)
        })
        .collect();
    self_loop[q - 1] = 1.0;
    PhraseHmm {
        phrase_id: phrase_id.to_string(),
        means,
        variances,
        self_loop,
    }
}

/// Segmental (Viterbi) training of a phrase HMM.
///
/// Starts from a uniform segmentation into `states` spans and alternates
/// Gaussian/transition re-estimation with Viterbi realignment until the
/// alignment stops changing or the iteration budget is spent. The best-path
/// log-likelihood never decreases between iterations.
pub fn train_hmm(
    phrase_id: &str,
    utterances: &[&FeatureMatrix],
    cfg: &HmmTrainConfig,
) -> Result<(PhraseHmm, HmmTrace)> {
    if cfg.states == 0 {
        return Err(input_err!("HMM needs at least one state"));
    }
    if utterances.len() < 2 {
        return Err(input_err!(
            "phrase {phrase_id}: HMM training needs at least 2 utterances, got {}",
            utterances.len()
        ));
    }
    let dims = utterances[0].rows();
    for (i, f) in utterances.iter().enumerate() {
        if f.cols() < cfg.states {
            return Err(input_err!(
                "phrase {phrase_id}: utterance {i} has {} frames, fewer than {} states",
                f.cols(),
                cfg.states
            ));
        }
        if f.rows() != dims {
            return Err(shape_err!("phrase {phrase_id}: utterance {i} has {} dims, expected {dims}", f.rows()));
        }
    }
    let mut paths: Vec<Vec<usize>> = utterances
        .iter()
        .map(|f| uniform_segmentation(f.cols(), cfg.states))
        .collect();
    let mut trace = HmmTrace::default();
    let mut hmm = reestimate(utterances, &paths, cfg, phrase_id);
    for _ in 0..cfg.iterations.max(1) {
        let mut total = 0.0;
        let mut changed = 0;
        for (f, path) in utterances.iter().zip(paths.iter_mut()) {
            let (q, ll) = hmm.viterbi_decode(f)?;
            changed += q.0.iter().zip(path.iter()).filter(|(a, b)| a != b).count();
            *path = q.0;
            total += ll;
        }
        trace.log_likelihoods.push(total);
        trace.changed_frames.push(changed);
        if changed == 0 && trace.changed_frames.len() > 1 {
            break;
        }
        hmm = reestimate(utterances, &paths, cfg, phrase_id);
    }
    Ok((hmm, trace))
}
