use super::{CorpusManifest, Partition};
use crate::error::{input_err, Result};
use crate::metrics::{KeyEntry, TrialLabel};
use log::warn;
use std::collections::HashMap;

/// An enrollment model: one speaker saying one phrase.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnrollModel {
    pub model_id: String,
    pub speaker_id: String,
    pub phrase_id: String,
    pub utterances: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialList {
    pub models: Vec<EnrollModel>,
    pub trials: Vec<KeyEntry>,
    /// Models dropped because the speaker had no test utterance of the phrase.
    pub skipped: usize,
}

pub fn model_id(speaker: &str, phrase: &str) -> String {
    format!("{speaker}_{phrase}")
}

/// Impostor-correct trials: every enrollment model is tested against all
/// test utterances of the same phrase in the partition. The first
/// `enroll_sessions` sessions (by session number) of a speaker and phrase
/// are enrollment data, the rest are test data.
pub fn build_trials(
    manifest: &CorpusManifest,
    partition: Partition,
    enroll_sessions: usize,
) -> Result<TrialList> {
    if enroll_sessions == 0 {
        return Err(input_err!("at least one enrollment session is required"));
    }
    let records: Vec<_> = manifest.partition(partition).collect();
    if records.is_empty() {
        return Err(input_err!("partition {partition} is empty"));
    }
    // (speaker, phrase) -> sorted sessions
    let mut sessions: HashMap<(&str, &str), Vec<u32>> = HashMap::new();
    for r in &records {
        sessions
            .entry((r.speaker_id.as_str(), r.phrase_id.as_str()))
            .or_default()
            .push(r.session);
    }
    for v in sessions.values_mut() {
        v.sort_unstable();
        v.dedup();
    }
    let is_enroll = |spk: &str, ph: &str, session: u32| {
        sessions[&(spk, ph)].iter().position(|&s| s == session).unwrap() < enroll_sessions
    };

    let mut models: Vec<EnrollModel> = Vec::new();
    let mut index: HashMap<(&str, &str), usize> = HashMap::new();
    let mut tests_by_phrase: HashMap<&str, Vec<(&str, &str)>> = HashMap::new();
    for r in &records {
        let key = (r.speaker_id.as_str(), r.phrase_id.as_str());
        if is_enroll(key.0, key.1, r.session) {
            let i = *index.entry(key).or_insert_with(|| {
                models.push(EnrollModel {
                    model_id: model_id(key.0, key.1),
                    speaker_id: key.0.to_string(),
                    phrase_id: key.1.to_string(),
                    utterances: Vec::new(),
                });
                models.len() - 1
            });
            models[i].utterances.push(r.utterance_id.clone());
        } else {
            tests_by_phrase
                .entry(key.1)
                .or_default()
                .push((r.utterance_id.as_str(), key.0));
        }
    }

    let mut kept = Vec::with_capacity(models.len());
    let mut trials = Vec::new();
    let mut skipped = 0;
    for m in models {
        let tests = tests_by_phrase.get(m.phrase_id.as_str()).map_or(&[][..], |v| v.as_slice());
        if !tests.iter().any(|(_, spk)| *spk == m.speaker_id) {
            skipped += 1;
            continue;
        }
        for (utt, spk) in tests {
            trials.push(KeyEntry {
                enroll_id: m.model_id.clone(),
                test_id: utt.to_string(),
                label: if *spk == m.speaker_id {
                    TrialLabel::Target
                } else {
                    TrialLabel::Nontarget
                },
            });
        }
        kept.push(m);
    }
    if skipped > 0 {
        warn!("{skipped} enrollment models skipped: speaker has no test utterance of the phrase");
    }
    Ok(TrialList {
        models: kept,
        trials,
        skipped,
    })
}

/// Enrollment list text: `model_id speaker_id phrase_id utt1 utt2 ...`.
pub fn enrollment_to_text(models: &[EnrollModel]) -> String {
    let mut out = String::new();
    for m in models {
        out.push_str(&format!("{} {} {}", m.model_id, m.speaker_id, m.phrase_id));
        for u in &m.utterances {
            out.push(' ');
            out.push_str(u);
        }
        out.push('\n');
    }
    out
}

pub fn parse_enrollment(text: &str) -> Result<Vec<EnrollModel>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| {
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() < 4 {
                return Err(crate::Error::Format(format!(
                    "enrollment line {}: expected model, speaker, phrase and utterances",
                    i + 1
                )));
            }
            Ok(EnrollModel {
                model_id: f[0].to_string(),
                speaker_id: f[1].to_string(),
                phrase_id: f[2].to_string(),
                utterances: f[3..].iter().map(|s| s.to_string()).collect(),
            })
        })
        .collect()
}
