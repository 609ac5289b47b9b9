//! Training objectives and batch construction for metric learning.
//!
//! Every loss returns its value together with the gradient with respect to
//! its inputs (logits or pair scores); chaining into the network is done by
//! the trainer.

mod auc;
pub(crate) mod mining;

pub use auc::{aauc_loss, exact_auc, AaucOutput};
pub use mining::{
    build_pair_batch, mine_hard, mine_hard_from_scores, pairwise_scores, Labeled, MinedTriplets,
    PairBatch, Triplet,
};

use crate::error::{input_err, shape_err, Result};
use crate::nn::{log_softmax, softmax};

/// `-log softmax(logits)[label]` and its gradient `softmax - onehot`.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(input_err!("label {label} outside [0, {})", logits.len()));
    }
    let loss = -log_softmax(logits)[label];
    let mut grad = softmax(logits);
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// Cross-entropy against a target distribution; gradient `softmax - target`.
pub fn soft_cross_entropy(logits: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if target.len() != logits.len() {
        return Err(shape_err!("{} targets for {} classes", target.len(), logits.len()));
    }
    let logp = log_softmax(logits);
    let loss = -target
        .iter()
        .zip(&logp)
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, l)| t * l)
        .sum::<f64>();
    let grad = softmax(logits).iter().zip(target).map(|(p, t)| p - t).collect();
    Ok((loss, grad))
}

/// Hinge on similarities: `max(0, margin - s_ap + s_an)`.
///
/// Returns the loss and its derivatives with respect to `s_ap` and `s_an`;
/// both derivatives are zero when the hinge is inactive.
pub fn triplet_loss(s_ap: f64, s_an: f64, margin: f64) -> (f64, f64, f64) {
    let z = margin - s_ap + s_an;
    if z > 0.0 {
        (z, -1.0, 1.0)
    } else {
        (0.0, 0.0, 0.0)
    }
}
