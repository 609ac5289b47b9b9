//! Per-phrase frame alignment and supervector pooling.
//!
//! A left-to-right HMM yields hard frame-to-state alignments; a GMM yields
//! soft frame-to-component posteriors. Either alignment is computed once per
//! utterance on the input features and reused at whatever layer pools, since
//! the front-end preserves the frame count. Gradients flow through the
//! pooling arithmetic only, never into the aligner.

mod file;
mod gmm;
mod hmm;
mod pool;

pub use file::{
    read_gmm_file, read_hmm_file, write_gmm_file, write_hmm_file, GMM_MAGIC, HMM_MAGIC,
};
pub use gmm::{train_gmm, GmmTrainConfig, GmmTrace, PhraseGmm};
pub use hmm::{train_hmm, viterbi_from_emissions, HmmTrainConfig, HmmTrace, PhraseHmm};
pub use pool::{
    average_pool, average_pool_backward, hmm_pool, hmm_pool_backward, map_pool,
    map_pool_backward, RunningMean,
};

use crate::error::{shape_err, Error, Result};
use crate::nn::Tensor2D;

/// Decoded HMM state per frame, 0-based (state `q` here is state `q + 1`
/// in one-based notation).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSequence(pub Vec<usize>);

impl StateSequence {
    /// Checks the left-to-right invariants: starts in the first state, ends in
    /// the last, never decreases and advances at most one state per frame.
    pub fn validate(&self, states: usize) -> Result<()> {
        let q = &self.0;
        let bad = |m: String| Err(Error::Domain(format!("invalid state sequence: {m}")));
        if q.is_empty() {
            return bad("empty".into());
        }
        if q[0] != 0 {
            return bad(format!("starts in state {}", q[0]));
        }
        if *q.last().expect("nonempty") != states - 1 {
            return bad(format!("ends in state {} of {states}", q.last().unwrap()));
        }
        if let Some(w) = q.windows(2).find(|w| w[1] < w[0] || w[1] > w[0] + 1) {
            return bad(format!("step {} -> {}", w[0], w[1]));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// One-hot `frames x states` alignment, stored as the state index per frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HardAlignment {
    states: usize,
    assignment: Vec<usize>,
}

impl HardAlignment {
    pub fn new(assignment: Vec<usize>, states: usize) -> Result<Self> {
        if let Some(&s) = assignment.iter().find(|&&s| s >= states) {
            return Err(shape_err!("frame assigned to state {s} of {states}"));
        }
        Ok(Self { states, assignment })
    }

    pub fn from_sequence(q: &StateSequence, states: usize) -> Result<Self> {
        Self::new(q.0.clone(), states)
    }

    pub fn frames(&self) -> usize {
        self.assignment.len()
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Number of frames assigned to each state.
    pub fn occupancy(&self) -> Vec<usize> {
        let mut n = vec![0; self.states];
        for &s in &self.assignment {
            n[s] += 1;
        }
        n
    }

    pub fn to_matrix(&self) -> Tensor2D {
        let mut m = Tensor2D::zeros(self.frames(), self.states);
        for (t, &s) in self.assignment.iter().enumerate() {
            m.set(t, s, 1.0);
        }
        m
    }

    /// The same alignment expressed as one-hot posteriors.
    pub fn to_soft(&self) -> SoftAlignment {
        SoftAlignment {
            posteriors: self.to_matrix(),
        }
    }
}

/// `frames x components` matrix of posteriors; rows sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftAlignment {
    posteriors: Tensor2D,
}

impl SoftAlignment {
    pub fn new(posteriors: Tensor2D) -> Result<Self> {
        for t in 0..posteriors.rows() {
            let row = posteriors.row(t);
            if row.iter().any(|&g| !(0.0..=1.0).contains(&g)) {
                return Err(Error::Domain(format!("posterior outside [0, 1] at frame {t}")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::Domain(format!("posteriors of frame {t} sum to {s}")));
            }
        }
        Ok(Self { posteriors })
    }

    pub fn frames(&self) -> usize {
        self.posteriors.rows()
    }

    pub fn components(&self) -> usize {
        self.posteriors.cols()
    }

    pub fn matrix(&self) -> &Tensor2D {
        &self.posteriors
    }

    /// Soft occupancy `n_c = sum_t gamma_t(c)`.
    pub fn occupancy(&self) -> Vec<f64> {
        let mut n = vec![0.0; self.components()];
        for t in 0..self.frames() {
            for (acc, g) in n.iter_mut().zip(self.posteriors.row(t)) {
                *acc += g;
            }
        }
        n
    }
}

/// Alignment of one utterance, as consumed by the pooling layer.
#[derive(Debug, Clone, PartialEq)]
pub enum Alignment {
    Hard(HardAlignment),
    Soft(SoftAlignment),
}

impl Alignment {
    pub fn frames(&self) -> usize {
        match self {
            Self::Hard(a) => a.frames(),
            Self::Soft(a) => a.frames(),
        }
    }

    pub fn slots(&self) -> usize {
        match self {
            Self::Hard(a) => a.states(),
            Self::Soft(a) => a.components(),
        }
    }
}

/// Per-state (or per-component) mean vectors, stored slot-major: the `D`
/// values of slot 0, then slot 1, and so on. Flattening is `as_slice`.
#[derive(Debug, Clone, PartialEq)]
pub struct Supervector {
    values: Tensor2D,
}

impl Supervector {
    pub fn zeros(slots: usize, dims: usize) -> Self {
        Self {
            values: Tensor2D::zeros(slots, dims),
        }
    }

    pub fn from_flat(slots: usize, dims: usize, values: Vec<f64>) -> Result<Self> {
        Ok(Self {
            values: Tensor2D::from_vec(slots, dims, values)?,
        })
    }

    pub fn slots(&self) -> usize {
        self.values.rows()
    }

    pub fn dims(&self) -> usize {
        self.values.cols()
    }

    pub fn slot(&self, q: usize) -> &[f64] {
        self.values.row(q)
    }

    pub fn slot_mut(&mut self, q: usize) -> &mut [f64] {
        self.values.row_mut(q)
    }

    pub fn as_slice(&self) -> &[f64] {
        self.values.as_slice()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values.into_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alignment_matrix_from_sequence() {
        let q = StateSequence(vec![0, 0, 1]);
        q.validate(2).unwrap();
        let a = HardAlignment::from_sequence(&q, 2).unwrap();
        let m = a.to_matrix();
        assert_eq!(m.as_slice(), &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        for t in 0..3 {
            assert_eq!(m.row(t).iter().sum::<f64>(), 1.0);
        }
        assert_eq!(a.occupancy(), vec![2, 1]);
    }

    #[test]
    fn sequence_validation() {
        assert!(StateSequence(vec![0, 2]).validate(3).is_err());
        assert!(StateSequence(vec![1, 2]).validate(3).is_err());
        assert!(StateSequence(vec![0, 1, 1]).validate(3).is_err());
        assert!(StateSequence(vec![0, 1, 0, 1]).validate(2).is_err());
        assert!(StateSequence(vec![0, 1, 1, 2]).validate(3).is_ok());
    }

    #[test]
    fn soft_alignment_rows_must_be_stochastic() {
        assert!(SoftAlignment::new(Tensor2D::from_vec(1, 2, vec![0.5, 0.6]).unwrap()).is_err());
        assert!(SoftAlignment::new(Tensor2D::from_vec(1, 2, vec![0.25, 0.75]).unwrap()).is_ok());
    }
}
