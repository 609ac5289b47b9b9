use crate::error::{input_err, Error, Result};
use crate::nn::{sigmoid, sigmoid_derivative};

fn check_sides(pos: &[f64], neg: &[f64]) -> Result<()> {
    if pos.is_empty() || neg.is_empty() {
        return Err(input_err!(
            "AUC needs at least one positive and one negative score ({} / {})",
            pos.len(),
            neg.len()
        ));
    }
    Ok(())
}

/// Fraction of positive/negative pairs ranked correctly, counting ties as 1/2.
pub fn exact_auc(pos: &[f64], neg: &[f64]) -> Result<f64> {
    check_sides(pos, neg)?;
    let mut hits = 0.0;
    for &p in pos {
        for &n in neg {
            hits += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    Ok(hits / (pos.len() * neg.len()) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AaucOutput {
    /// Sigmoid-relaxed AUC in (0, 1); training maximises it.
    pub value: f64,
    /// d value / d positive score.
    pub grad_pos: Vec<f64>,
    /// d value / d negative score.
    pub grad_neg: Vec<f64>,
}

/// Mean of `sigmoid(alpha (s_pos - s_neg))` over all positive/negative pairs.
pub fn aauc_loss(pos: &[f64], neg: &[f64], alpha: f64) -> Result<AaucOutput> {
    if !(alpha > 0.0) {
        return Err(Error::Config(format!("sigmoid slope must be positive, got {alpha}")));
    }
    check_sides(pos, neg)?;
    let scale = 1.0 / (pos.len() * neg.len()) as f64;
    let mut value = 0.0;
    let mut grad_pos = vec![0.0; pos.len()];
    let mut grad_neg = vec![0.0; neg.len()];
    for (i, &p) in pos.iter().enumerate() {
        for (j, &n) in neg.iter().enumerate() {
            let z = alpha * (p - n);
            value += sigmoid(z);
            let d = alpha * sigmoid_derivative(z) * scale;
            grad_pos[i] += d;
            grad_neg[j] -= d;
        }
    }
    Ok(AaucOutput {
        value: value * scale,
        grad_pos,
        grad_neg,
    })
}
