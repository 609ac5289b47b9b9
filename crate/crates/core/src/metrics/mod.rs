//! Detection metrics over scored trial lists: EER, normalized minimum
//! detection cost, AUC and DET curves.
//!
//! Operating points use the rule "accept when score >= threshold". With `N`
//! distinct scores there are `N + 1` points: one per distinct score (the
//! lowest accepts everything) and a final reject-all point.

mod files;

pub use files::{
    join_scores_with_key, read_det, read_key, read_scores, write_det, write_key, write_scores, KeyEntry,
    ScoreEntry,
};

use crate::error::{input_err, Result};
use statrs::distribution::{ContinuousCDF, Normal};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrialLabel {
    Target,
    Nontarget,
}

impl TrialLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            TrialLabel::Target => "target",
            TrialLabel::Nontarget => "nontarget",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "target" => Some(TrialLabel::Target),
            "nontarget" => Some(TrialLabel::Nontarget),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub enroll_id: String,
    pub test_id: String,
    pub score: f64,
    pub label: TrialLabel,
}

/// Scored trials with at least one target and one nontarget.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredTrialSet {
    trials: Vec<Trial>,
    targets: Vec<f64>,
    nontargets: Vec<f64>,
}

impl ScoredTrialSet {
    pub fn new(trials: Vec<Trial>) -> Result<Self> {
        if let Some(t) = trials.iter().find(|t| !t.score.is_finite()) {
            return Err(input_err!(
                "non-finite score for trial {} {}",
                t.enroll_id,
                t.test_id
            ));
        }
        let pick = |l: TrialLabel| -> Vec<f64> {
            trials.iter().filter(|t| t.label == l).map(|t| t.score).collect()
        };
        let targets = pick(TrialLabel::Target);
        let nontargets = pick(TrialLabel::Nontarget);
        if targets.is_empty() || nontargets.is_empty() {
            return Err(input_err!(
                "trial set needs both classes ({} targets, {} nontargets)",
                targets.len(),
                nontargets.len()
            ));
        }
        Ok(Self {
            trials,
            targets,
            nontargets,
        })
    }

    /// Anonymous trials built from raw target and nontarget scores.
    pub fn from_scores(targets: &[f64], nontargets: &[f64]) -> Result<Self> {
        let mk = |(i, &s): (usize, &f64), label| Trial {
            enroll_id: format!("e{i}"),
            test_id: format!("t{i}"),
            score: s,
            label,
        };
        let mut trials: Vec<Trial> =
            targets.iter().enumerate().map(|x| mk(x, TrialLabel::Target)).collect();
        trials.extend(
            nontargets
                .iter()
                .enumerate()
                .map(|(i, s)| mk((i + targets.len(), s), TrialLabel::Nontarget)),
        );
        Self::new(trials)
    }

    pub fn trials(&self) -> &[Trial] {
        &self.trials
    }

    pub fn target_scores(&self) -> &[f64] {
        &self.targets
    }

    pub fn nontarget_scores(&self) -> &[f64] {
        &self.nontargets
    }

    /// Same trials with target and nontarget labels exchanged.
    pub fn swap_labels(&self) -> Self {
        Self {
            trials: self
                .trials
                .iter()
                .map(|t| Trial {
                    label: match t.label {
                        TrialLabel::Target => TrialLabel::Nontarget,
                        TrialLabel::Nontarget => TrialLabel::Target,
                    },
                    ..t.clone()
                })
                .collect(),
            targets: self.nontargets.clone(),
            nontargets: self.targets.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetPoint {
    /// Accept when `score >= threshold`; `+inf` for the reject-all point.
    pub threshold: f64,
    pub p_fa: f64,
    pub p_miss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetCurve {
    pub points: Vec<DetPoint>,
}

impl DetCurve {
    /// Checks the shape every DET curve must have: probabilities in [0, 1],
    /// strictly increasing thresholds, false alarms never rising and misses
    /// never falling along them, ending at the reject-all point (0, 1).
    pub fn validate(&self) -> Result<()> {
        let last = self
            .points
            .last()
            .ok_or_else(|| input_err!("DET curve has no points"))?;
        for (i, p) in self.points.iter().enumerate() {
            if !(0.0..=1.0).contains(&p.p_fa) || !(0.0..=1.0).contains(&p.p_miss) {
                return Err(input_err!("DET point {i} has probabilities outside [0, 1]"));
            }
        }
        for (i, w) in self.points.windows(2).enumerate() {
            let (a, b) = (&w[0], &w[1]);
            if !(b.threshold > a.threshold) {
                return Err(input_err!("DET thresholds not increasing at point {}", i + 1));
            }
            if b.p_fa > a.p_fa || b.p_miss < a.p_miss {
                return Err(input_err!("DET curve not monotone at point {}", i + 1));
            }
        }
        if last.p_fa != 0.0 || last.p_miss != 1.0 {
            return Err(input_err!("DET curve does not end at the reject-all point"));
        }
        Ok(())
    }

    /// Standard normal deviates `(probit(p_fa), probit(p_miss))`; 0 and 1 map
    /// to infinities.
    pub fn normal_deviates(&self) -> Vec<(f64, f64)> {
        self.points.iter().map(|p| (probit(p.p_fa), probit(p.p_miss))).collect()
    }
}

pub fn probit(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else {
        Normal::standard().inverse_cdf(p)
    }
}

/// Operating points for every distinct threshold, in increasing threshold order.
pub fn det_points(trials: &ScoredTrialSet) -> DetCurve {
    let mut all: Vec<(f64, bool)> = trials
        .targets
        .iter()
        .map(|&s| (s, true))
        .chain(trials.nontargets.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n_tar = trials.targets.len() as f64;
    let n_non = trials.nontargets.len() as f64;
    let (mut below_tar, mut below_non) = (0usize, 0usize);
    let mut points = Vec::with_capacity(all.len() + 1);
    let mut i = 0;
    while i < all.len() {
        let threshold = all[i].0;
        points.push(DetPoint {
            threshold,
            p_fa: (n_non - below_non as f64) / n_non,
            p_miss: below_tar as f64 / n_tar,
        });
        while i < all.len() && all[i].0 == threshold {
            if all[i].1 {
                below_tar += 1;
            } else {
                below_non += 1;
            }
            i += 1;
        }
    }
    points.push(DetPoint {
        threshold: f64::INFINITY,
        p_fa: 0.0,
        p_miss: 1.0,
    });
    DetCurve { points }
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Lower convex hull of `(p_fa, p_miss)` points, ordered by increasing `p_fa`.
fn lower_hull(curve: &DetCurve) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = curve.points.iter().map(|p| (p.p_fa, p.p_miss)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for p in pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull
}

/// Equal error rate of a DET curve: the point where the convex hull of the
/// operating points meets `p_miss = p_fa`, interpolating linearly along the
/// hull segment that crosses it.
pub fn eer_from_det(curve: &DetCurve) -> f64 {
    let hull = lower_hull(curve);
    for w in hull.windows(2) {
        let (a, b) = (w[0], w[1]);
        let da = a.1 - a.0;
        let db = b.1 - b.0;
        if da >= 0.0 && db <= 0.0 {
            if da == db {
                return a.0;
            }
            let t = da / (da - db);
            return a.0 + t * (b.0 - a.0);
        }
    }
    // single-point hull only happens for the perfect (0, 0) corner
    hull.first().map_or(0.0, |p| p.0.max(p.1))
}

pub fn compute_eer(trials: &ScoredTrialSet) -> f64 {
    eer_from_det(&det_points(trials))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcfParams {
    pub p_target: f64,
    pub c_miss: f64,
    pub c_fa: f64,
}

impl Default for DcfParams {
    fn default() -> Self {
        Self {
            p_target: 0.001,
            c_miss: 1.0,
            c_fa: 1.0,
        }
    }
}

impl DcfParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_target > 0.0 && self.p_target < 1.0) || !(self.c_miss > 0.0) || !(self.c_fa > 0.0) {
            return Err(crate::Error::Config(format!("invalid detection cost parameters {self:?}")));
        }
        Ok(())
    }

    /// Normalized cost of one operating point.
    pub fn normalized_cost(&self, p_miss: f64, p_fa: f64) -> f64 {
        let a = self.c_miss * self.p_target;
        let b = self.c_fa * (1.0 - self.p_target);
        (a * p_miss + b * p_fa) / a.min(b)
    }
}

/// Minimum normalized detection cost over all operating points.
pub fn compute_min_dcf(trials: &ScoredTrialSet, params: DcfParams) -> Result<f64> {
    params.validate()?;
    Ok(det_points(trials)
        .points
        .iter()
        .map(|p| params.normalized_cost(p.p_miss, p.p_fa))
        .fold(f64::INFINITY, f64::min))
}

/// Rank-sum AUC with mid-ranks for ties; same value as the pairwise count
/// with ties counted as 1/2.
pub fn compute_auc(trials: &ScoredTrialSet) -> f64 {
    let mut all: Vec<(f64, bool)> = trials
        .targets
        .iter()
        .map(|&s| (s, true))
        .chain(trials.nontargets.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // twice the rank sum of targets, kept integral
    let mut rank_sum2: u64 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        // ranks i+1..=j share the midrank (i + 1 + j) / 2
        let mid2 = (i + 1 + j) as u64;
        let tar = all[i..j].iter().filter(|x| x.1).count() as u64;
        rank_sum2 += mid2 * tar;
        i = j;
    }
    let n_p = trials.targets.len() as u64;
    let n_n = trials.nontargets.len() as u64;
    let u2 = rank_sum2 - n_p * (n_p + 1);
    (u2 as f64 / 2.0) / (n_p * n_n) as f64
}

/// Summary of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub targets: usize,
    pub nontargets: usize,
    pub eer: f64,
    pub min_dcf: f64,
    pub auc: f64,
    pub dcf: DcfParams,
}

impl MetricReport {
    pub fn compute(trials: &ScoredTrialSet, dcf: DcfParams) -> Result<Self> {
        Ok(Self {
            targets: trials.targets.len(),
            nontargets: trials.nontargets.len(),
            eer: compute_eer(trials),
            min_dcf: compute_min_dcf(trials, dcf)?,
            auc: compute_auc(trials),
            dcf,
        })
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "targets {}", self.targets)?;
        writeln!(f, "nontargets {}", self.nontargets)?;
        writeln!(f, "eer_percent {:.4}", 100.0 * self.eer)?;
        writeln!(
            f,
            "min_dcf {:.6} (p_target {} c_miss {} c_fa {})",
            self.min_dcf, self.dcf.p_target, self.dcf.c_miss, self.dcf.c_fa
        )?;
        writeln!(f, "auc_percent {:.4}", 100.0 * self.auc)
    }
}
