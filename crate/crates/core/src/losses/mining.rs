use crate::error::{input_err, Result};
use crate::nn::Tensor2D;
use log::debug;

/// One embedding of a phrase-homogeneous batch.
#[derive(Debug, Clone, Copy)]
pub struct Labeled<'a> {
    pub speaker: &'a str,
    pub phrase: &'a str,
    pub vector: &'a [f64],
}

/// Positive and negative pair scores plus the batch indices behind each score.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairBatch {
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
    pub positive_pairs: Vec<(usize, usize)>,
    pub negative_pairs: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
    pub score_ap: f64,
    pub score_an: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MinedTriplets {
    pub triplets: Vec<Triplet>,
    /// Anchors without a same-speaker or a different-speaker partner.
    pub skipped: usize,
}

fn check_phrase(items: &[Labeled<'_>]) -> Result<()> {
    if let Some(first) = items.first() {
        if let Some(other) = items.iter().find(|i| i.phrase != first.phrase) {
            return Err(input_err!(
                "batch mixes phrases {} and {}",
                first.phrase,
                other.phrase
            ));
        }
    }
    Ok(())
}

/// Symmetric matrix of `scorer(i, j)` for all batch items.
pub fn pairwise_scores<F>(items: &[Labeled<'_>], scorer: F) -> Result<Tensor2D>
where
    F: Fn(&[f64], &[f64]) -> Result<f64>,
{
    let n = items.len();
    let mut s = Tensor2D::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let v = scorer(items[i].vector, items[j].vector)?;
            s.set(i, j, v);
            s.set(j, i, v);
        }
    }
    Ok(s)
}

/// Hard mining on a precomputed score matrix: for each anchor, the
/// least similar same-speaker item and the most similar other-speaker item,
/// ties going to the lowest index.
pub fn mine_hard_from_scores(speakers: &[&str], scores: &Tensor2D) -> MinedTriplets {
    let mut out = MinedTriplets::default();
    for a in 0..speakers.len() {
        let mut pos: Option<(usize, f64)> = None;
        let mut neg: Option<(usize, f64)> = None;
        for j in 0..speakers.len() {
            if j == a {
                continue;
            }
            let s = scores.get(a, j);
            if speakers[j] == speakers[a] {
                if pos.is_none_or(|(_, b)| s < b) {
                    pos = Some((j, s));
                }
            } else if neg.is_none_or(|(_, b)| s > b) {
                neg = Some((j, s));
            }
        }
        match (pos, neg) {
            (Some((p, sp)), Some((n, sn))) => out.triplets.push(Triplet {
                anchor: a,
                positive: p,
                negative: n,
                score_ap: sp,
                score_an: sn,
            }),
            _ => out.skipped += 1,
        }
    }
    if out.skipped > 0 {
        debug!("hard mining skipped {} anchors without a valid pair", out.skipped);
    }
    out
}

/// Hardest positive and hardest negative for every anchor of the batch.
pub fn mine_hard<F>(items: &[Labeled<'_>], scorer: F) -> Result<MinedTriplets>
where
    F: Fn(&[f64], &[f64]) -> Result<f64>,
{
    check_phrase(items)?;
    let scores = pairwise_scores(items, scorer)?;
    let speakers: Vec<&str> = items.iter().map(|i| i.speaker).collect();
    Ok(mine_hard_from_scores(&speakers, &scores))
}

/// All same-speaker and different-speaker pairs `(i, j)`, `i < j`, optionally
/// capped to the hardest ones (lowest positive scores, highest negative
/// scores; ties keep enumeration order).
pub fn build_pair_batch<F>(
    items: &[Labeled<'_>],
    scorer: F,
    max_positive: Option<usize>,
    max_negative: Option<usize>,
) -> Result<PairBatch>
where
    F: Fn(&[f64], &[f64]) -> Result<f64>,
{
    check_phrase(items)?;
    let scores = pairwise_scores(items, scorer)?;
    let speakers: Vec<&str> = items.iter().map(|i| i.speaker).collect();
    pair_batch_from_scores(&speakers, &scores, max_positive, max_negative)
}

pub(crate) fn pair_batch_from_scores(
    speakers: &[&str],
    scores: &Tensor2D,
    max_positive: Option<usize>,
    max_negative: Option<usize>,
) -> Result<PairBatch> {
    let n = speakers.len();
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let entry = ((i, j), scores.get(i, j));
            if speakers[i] == speakers[j] {
                pos.push(entry);
            } else {
                neg.push(entry);
            }
        }
    }
    if pos.is_empty() || neg.is_empty() {
        return Err(input_err!(
            "batch of {n} items yields {} positive and {} negative pairs",
            pos.len(),
            neg.len()
        ));
    }
    pos.sort_by(|a, b| a.1.total_cmp(&b.1));
    neg.sort_by(|a, b| b.1.total_cmp(&a.1));
    if let Some(m) = max_positive {
        pos.truncate(m.max(1));
    }
    if let Some(m) = max_negative {
        neg.truncate(m.max(1));
    }
    Ok(PairBatch {
        positive: pos.iter().map(|p| p.1).collect(),
        negative: neg.iter().map(|p| p.1).collect(),
        positive_pairs: pos.iter().map(|p| p.0).collect(),
        negative_pairs: neg.iter().map(|p| p.0).collect(),
    })
}
