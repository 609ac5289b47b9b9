use super::{Model, Utterance};
use crate::binio::{read_all, write_atomic, ByteReader, ByteWriter};
use crate::corpus::{EnrollModel, TrialList};
use crate::error::{Error, Result};
use crate::metrics::{join_scores_with_key, ScoreEntry, ScoredTrialSet};
use crate::nn::{cosine_similarity, l2_normalize};
use rayon::prelude::*;
use std::collections::HashMap;
use std::path::Path;

pub const EMBEDDING_MAGIC: &[u8; 4] = b"SVEM";
const EMBEDDING_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub utterance_id: String,
    pub speaker_id: String,
    pub phrase_id: String,
    pub values: Vec<f64>,
}

impl Model {
    /// Scoring vector of one utterance: the pooled supervector, or the
    /// back-end output for architecture D.
    pub fn embed(&self, u: &Utterance) -> Result<Embedding> {
        let fwd = self.forward(&u.features, &u.phrase_id, u.alignment.as_ref())?;
        if fwd.output.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite embedding for {}", u.utterance_id)));
        }
        Ok(Embedding {
            utterance_id: u.utterance_id.clone(),
            speaker_id: u.speaker_id.clone(),
            phrase_id: u.phrase_id.clone(),
            values: fwd.output,
        })
    }

    pub fn embed_all(&self, items: &[Utterance]) -> Result<Vec<Embedding>> {
        items.par_iter().map(|u| self.embed(u)).collect()
    }
}

/// Length-normalized mean of the enrollment embeddings of one speaker and phrase.
pub fn enroll(embeddings: &[&Embedding]) -> Result<Vec<f64>> {
    let first = embeddings
        .first()
        .ok_or_else(|| Error::Usage("enrollment needs at least one utterance".into()))?;
    let dim = first.values.len();
    let mut mean = vec![0.0; dim];
    for e in embeddings {
        if e.phrase_id != first.phrase_id {
            return Err(Error::Usage(format!(
                "enrollment mixes phrases {} and {}",
                first.phrase_id, e.phrase_id
            )));
        }
        if e.values.len() != dim {
            return Err(Error::Usage("enrollment embeddings differ in dimension".into()));
        }
        mean.iter_mut().zip(&e.values).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= embeddings.len() as f64);
    l2_normalize(&mean)
}

/// Cosine similarity between an enrollment vector and a test embedding.
pub fn score_trial(enrollment: &[f64], test: &[f64]) -> Result<f64> {
    if enrollment.len() != test.len() {
        return Err(Error::Usage(format!(
            "enrollment vector has {} dims, test embedding {}",
            enrollment.len(),
            test.len()
        )));
    }
    cosine_similarity(enrollment, test)
}

/// Scores a trial list from per-utterance vectors keyed by utterance id.
/// `phrases` maps utterance ids to phrase ids; every trial must pair a
/// model and a test utterance of the same phrase.
pub fn score_trials(
    models: &[EnrollModel],
    trials: &[crate::metrics::KeyEntry],
    vectors: &HashMap<String, Vec<f64>>,
    phrases: &HashMap<String, String>,
) -> Result<Vec<ScoreEntry>> {
    let lookup = |id: &str| {
        vectors
            .get(id)
            .ok_or_else(|| Error::Input(format!("no embedding for utterance {id}")))
    };
    let mut enrolled: HashMap<&str, (Vec<f64>, &str)> = HashMap::new();
    for m in models {
        let embs: Vec<Embedding> = m
            .utterances
            .iter()
            .map(|u| {
                Ok(Embedding {
                    utterance_id: u.clone(),
                    speaker_id: m.speaker_id.clone(),
                    phrase_id: phrases.get(u).cloned().unwrap_or_else(|| m.phrase_id.clone()),
                    values: lookup(u)?.clone(),
                })
            })
            .collect::<Result<_>>()?;
        if let Some(e) = embs.iter().find(|e| e.phrase_id != m.phrase_id) {
            return Err(Error::Usage(format!(
                "model {} of phrase {} enrolls {} of phrase {}",
                m.model_id, m.phrase_id, e.utterance_id, e.phrase_id
            )));
        }
        let refs: Vec<&Embedding> = embs.iter().collect();
        enrolled.insert(&m.model_id, (enroll(&refs)?, &m.phrase_id));
    }
    trials
        .iter()
        .map(|t| {
            let (vec, phrase) = enrolled
                .get(t.enroll_id.as_str())
                .ok_or_else(|| Error::Input(format!("unknown enrollment model {}", t.enroll_id)))?;
            if let Some(p) = phrases.get(&t.test_id) {
                if p != phrase {
                    return Err(Error::Usage(format!(
                        "trial {} {} crosses phrases {phrase} and {p}",
                        t.enroll_id, t.test_id
                    )));
                }
            }
            Ok(ScoreEntry {
                enroll_id: t.enroll_id.clone(),
                test_id: t.test_id.clone(),
                score: score_trial(vec, lookup(&t.test_id)?)?,
            })
        })
        .collect()
}

/// Embeds every utterance and scores the trial list.
pub fn evaluate(model: &Model, items: &[Utterance], trials: &TrialList) -> Result<(Vec<ScoreEntry>, ScoredTrialSet)> {
    let embs = model.embed_all(items)?;
    let phrases: HashMap<String, String> =
        embs.iter().map(|e| (e.utterance_id.clone(), e.phrase_id.clone())).collect();
    let vectors: HashMap<String, Vec<f64>> =
        embs.into_iter().map(|e| (e.utterance_id, e.values)).collect();
    let scores = score_trials(&trials.models, &trials.trials, &vectors, &phrases)?;
    let set = join_scores_with_key(&scores, &trials.trials)?;
    Ok((scores, set))
}

pub fn encode_embeddings(embs: &[Embedding]) -> Result<Vec<u8>> {
    let dim = embs.first().map_or(0, |e| e.values.len());
    if embs.iter().any(|e| e.values.len() != dim) {
        return Err(Error::Usage("embeddings differ in dimension".into()));
    }
    let mut w = ByteWriter::new(EMBEDDING_MAGIC, EMBEDDING_VERSION);
    w.u64(embs.len() as u64);
    w.u32(dim as u32);
    for e in embs {
        w.str(&e.utterance_id);
        w.f32s(&e.values);
    }
    Ok(w.buf)
}

/// `(utterance_id, vector)` records of an embedding file.
pub fn decode_embeddings(bytes: &[u8]) -> Result<Vec<(String, Vec<f64>)>> {
    let (mut r, version) = ByteReader::open(bytes, EMBEDDING_MAGIC, "embedding")?;
    if version != EMBEDDING_VERSION {
        return Err(Error::Format(format!("unsupported embedding file version {version}")));
    }
    let count = r.u64()? as usize;
    let dim = r.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let id = r.str()?;
        out.push((id, r.f32s(dim)?));
    }
    r.finish()?;
    Ok(out)
}

pub fn write_embeddings(path: &Path, embs: &[Embedding]) -> Result<()> {
    write_atomic(path, &encode_embeddings(embs)?)
}

pub fn read_embeddings(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    decode_embeddings(&read_all(path)?)
}
