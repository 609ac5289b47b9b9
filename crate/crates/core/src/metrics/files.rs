use super::{DetCurve, DetPoint, ScoredTrialSet, Trial, TrialLabel};
use crate::binio::{read_text, write_atomic};
use crate::error::{Error, Result};
use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreEntry {
    pub enroll_id: String,
    pub test_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyEntry {
    pub enroll_id: String,
    pub test_id: String,
    pub label: TrialLabel,
}

fn fields<'a>(path: &Path, lineno: usize, line: &'a str) -> Result<[&'a str; 3]> {
    let parts: Vec<&str> = line.split_whitespace().collect();
    <[&str; 3]>::try_from(parts).map_err(|p| {
        Error::Format(format!(
            "{}:{}: expected 3 fields, found {}",
            path.display(),
            lineno + 1,
            p.len()
        ))
    })
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
}

/// Reads `<enroll_id> <test_id> <score>` lines.
pub fn read_scores(path: &Path) -> Result<Vec<ScoreEntry>> {
    let text = read_text(path)?;
    content_lines(&text)
        .map(|(i, line)| {
            let [e, t, s] = fields(path, i, line)?;
            let score: f64 = s.parse().map_err(|_| {
                Error::Format(format!("{}:{}: bad score {s:?}", path.display(), i + 1))
            })?;
            Ok(ScoreEntry {
                enroll_id: e.to_string(),
                test_id: t.to_string(),
                score,
            })
        })
        .collect()
}

/// Reads `<enroll_id> <test_id> target|nontarget` lines.
pub fn read_key(path: &Path) -> Result<Vec<KeyEntry>> {
    let text = read_text(path)?;
    content_lines(&text)
        .map(|(i, line)| {
            let [e, t, l] = fields(path, i, line)?;
            let label = TrialLabel::parse(l).ok_or_else(|| {
                Error::Format(format!("{}:{}: bad label {l:?}", path.display(), i + 1))
            })?;
            Ok(KeyEntry {
                enroll_id: e.to_string(),
                test_id: t.to_string(),
                label,
            })
        })
        .collect()
}

pub fn write_scores(path: &Path, scores: &[ScoreEntry]) -> Result<()> {
    let mut out = String::new();
    for s in scores {
        writeln!(out, "{} {} {}", s.enroll_id, s.test_id, s.score).unwrap();
    }
    write_atomic(path, out.as_bytes())
}

pub fn write_key(path: &Path, key: &[KeyEntry]) -> Result<()> {
    let mut out = String::new();
    for k in key {
        writeln!(out, "{} {} {}", k.enroll_id, k.test_id, k.label.as_str()).unwrap();
    }
    write_atomic(path, out.as_bytes())
}

/// Writes the curve with raw probabilities and normal deviates.
pub fn write_det(path: &Path, curve: &DetCurve) -> Result<()> {
    let mut out = String::from("# threshold p_fa p_miss probit_fa probit_miss\n");
    for (p, (zf, zm)) in curve.points.iter().zip(curve.normal_deviates()) {
        writeln!(
            out,
            "{} {} {} {:.6} {:.6}",
            p.threshold, p.p_fa, p.p_miss, zf, zm
        )
        .unwrap();
    }
    write_atomic(path, out.as_bytes())
}

/// Reads the threshold and probability columns written by [`write_det`].
pub fn read_det(path: &Path) -> Result<DetCurve> {
    let text = read_text(path)?;
    let points = content_lines(&text)
        .map(|(i, line)| {
            let parts: Vec<f64> = line
                .split_whitespace()
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), i + 1)))?;
            if parts.len() != 5 {
                return Err(Error::Format(format!(
                    "{}:{}: expected 5 columns, found {}",
                    path.display(),
                    i + 1,
                    parts.len()
                )));
            }
            Ok(DetPoint {
                threshold: parts[0],
                p_fa: parts[1],
                p_miss: parts[2],
            })
        })
        .collect::<Result<_>>()?;
    Ok(DetCurve { points })
}

/// Labels every scored trial from the key. Every score needs a key entry and
/// duplicates on either side are rejected; key entries without a score are
/// ignored.
pub fn join_scores_with_key(scores: &[ScoreEntry], key: &[KeyEntry]) -> Result<ScoredTrialSet> {
    let mut labels = HashMap::with_capacity(key.len());
    for k in key {
        if labels
            .insert((k.enroll_id.as_str(), k.test_id.as_str()), k.label)
            .is_some()
        {
            return Err(Error::Format(format!(
                "duplicate key entry {} {}",
                k.enroll_id, k.test_id
            )));
        }
    }
    let mut seen = HashSet::with_capacity(scores.len());
    let mut trials = Vec::with_capacity(scores.len());
    for s in scores {
        let id = (s.enroll_id.as_str(), s.test_id.as_str());
        if !seen.insert(id) {
            return Err(Error::Format(format!(
                "duplicate score for {} {}",
                s.enroll_id, s.test_id
            )));
        }
        let label = *labels.get(&id).ok_or_else(|| {
            Error::Format(format!("no key entry for trial {} {}", s.enroll_id, s.test_id))
        })?;
        trials.push(Trial {
            enroll_id: s.enroll_id.clone(),
            test_id: s.test_id.clone(),
            score: s.score,
            label,
        });
    }
    ScoredTrialSet::new(trials)
}
