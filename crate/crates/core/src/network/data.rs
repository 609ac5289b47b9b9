use super::Pooling;
use crate::align::{
    read_gmm_file, train_gmm, train_hmm, GmmTrainConfig, HmmTrainConfig, read_hmm_file, write_gmm_file, write_hmm_file, Alignment, PhraseGmm, PhraseHmm,
    RunningMean,
};
use crate::corpus::{CorpusManifest, Partition, UtteranceRecord};
use crate::error::{Error, Result};
use crate::features::{cepstral_mean_normalize, interpolate_time, FeatureMatrix};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// A trained GMM together with its MAP pooling statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmAligner {
    pub gmm: PhraseGmm,
    pub running_mean: RunningMean,
    pub tau: f64,
}

/// One aligner per phrase.
#[derive(Debug, Clone, PartialEq)]
pub enum AlignerSet {
    Hmm(BTreeMap<String, PhraseHmm>),
    Gmm(BTreeMap<String, GmmAligner>),
}

/// Alignment of one utterance, tagged with the phrase whose model made it.
#[derive(Debug, Clone, PartialEq)]
pub struct PhraseAlignment {
    pub phrase_id: String,
    pub alignment: Alignment,
}

impl AlignerSet {
    pub fn pooling(&self) -> Pooling {
        match self {
            AlignerSet::Hmm(_) => Pooling::Hmm,
            AlignerSet::Gmm(_) => Pooling::GmmMap,
        }
    }

    pub fn phrases(&self) -> Vec<String> {
        match self {
            AlignerSet::Hmm(m) => m.keys().cloned().collect(),
            AlignerSet::Gmm(m) => m.keys().cloned().collect(),
        }
    }

    /// States or components per phrase model (all phrases must agree).
    pub fn slots(&self) -> Result<usize> {
        let counts: Vec<usize> = match self {
            AlignerSet::Hmm(m) => m.values().map(|h| h.states()).collect(),
            AlignerSet::Gmm(m) => m.values().map(|g| g.gmm.components()).collect(),
        };
        match counts.first() {
            None => Err(Error::Config("empty aligner set".into())),
            Some(&c) if counts.iter().all(|&x| x == c) => Ok(c),
            _ => Err(Error::Config("phrase aligners differ in size".into())),
        }
    }

    pub fn align(&self, phrase: &str, features: &FeatureMatrix) -> Result<PhraseAlignment> {
        let missing = || Error::Usage(format!("no aligner for phrase {phrase}"));
        let features = &aligner_input(features);
        let alignment = match self {
            AlignerSet::Hmm(m) => Alignment::Hard(m.get(phrase).ok_or_else(missing)?.align(features)?),
            AlignerSet::Gmm(m) => {
                Alignment::Soft(m.get(phrase).ok_or_else(missing)?.gmm.posteriors(features)?)
            }
        };
        Ok(PhraseAlignment {
            phrase_id: phrase.to_string(),
            alignment,
        })
    }

    /// One left-to-right HMM per phrase, trained on all given utterances.
    pub fn train_hmm(items: &[Utterance], cfg: &HmmTrainConfig) -> Result<Self> {
        let groups = group_by_phrase(items)?;
        let models: Vec<(String, PhraseHmm)> = groups
            .par_iter()
            .map(|(phrase, feats)| {
                let refs: Vec<&FeatureMatrix> = feats.iter().collect();
                Ok((phrase.to_string(), train_hmm(phrase, &refs, cfg)?.0))
            })
            .collect::<Result<_>>()?;
        Ok(AlignerSet::Hmm(models.into_iter().collect()))
    }

    /// One GMM per phrase; the running mean starts at the component means.
    pub fn train_gmm(items: &[Utterance], cfg: &GmmTrainConfig, tau: f64, beta: f64) -> Result<Self> {
        let groups = group_by_phrase(items)?;
        let models: Vec<(String, GmmAligner)> = groups
            .par_iter()
            .map(|(phrase, feats)| {
                let refs: Vec<&FeatureMatrix> = feats.iter().collect();
                let gmm = train_gmm(phrase, &refs, cfg)?.0;
                let running_mean = RunningMean::new(gmm.means.clone(), beta)?;
                Ok((phrase.to_string(), GmmAligner { gmm, running_mean, tau }))
            })
            .collect::<Result<_>>()?;
        Ok(AlignerSet::Gmm(models.into_iter().collect()))
    }

    /// Copies of `items` carrying this set's alignments.
    pub fn align_all(&self, items: &[Utterance]) -> Result<Vec<Utterance>> {
        items
            .par_iter()
            .map(|u| {
                Ok(Utterance {
                    alignment: Some(self.align(&u.phrase_id, &u.features)?),
                    ..u.clone()
                })
            })
            .collect()
    }

    pub fn file_name(&self, phrase: &str) -> String {
        match self {
            AlignerSet::Hmm(_) => format!("{phrase}.svhm"),
            AlignerSet::Gmm(_) => format!("{phrase}.svgm"),
        }
    }

    /// Writes one model file per phrase into `dir`; returns the paths.
    pub fn save(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut out = Vec::new();
        for phrase in self.phrases() {
            let path = dir.join(self.file_name(&phrase));
            match self {
                AlignerSet::Hmm(m) => write_hmm_file(&path, &m[&phrase])?,
                AlignerSet::Gmm(m) => {
                    let g = &m[&phrase];
                    write_gmm_file(&path, &g.gmm, &g.running_mean, g.tau)?
                }
            }
            out.push(path);
        }
        Ok(out)
    }

    /// Loads every `.svhm` or every `.svgm` file of a directory.
    pub fn load(dir: &Path) -> Result<Self> {
        let mut names: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("svhm" | "svgm")))
            .collect();
        names.sort();
        let hmm = names.iter().any(|p| p.extension().is_some_and(|e| e == "svhm"));
        let gmm = names.iter().any(|p| p.extension().is_some_and(|e| e == "svgm"));
        match (hmm, gmm) {
            (true, true) => Err(Error::Config(format!("{} mixes HMM and GMM aligners", dir.display()))),
            (false, false) => Err(Error::Config(format!("no aligner files in {}", dir.display()))),
            (true, false) => {
                let mut m = BTreeMap::new();
                for p in names {
                    let h = read_hmm_file(&p)?;
                    m.insert(h.phrase_id.clone(), h);
                }
                Ok(AlignerSet::Hmm(m))
            }
            (false, true) => {
                let mut m = BTreeMap::new();
                for p in names {
                    let (gmm, running_mean, tau) = read_gmm_file(&p)?;
                    m.insert(gmm.phrase_id.clone(), GmmAligner { gmm, running_mean, tau });
                }
                Ok(AlignerSet::Gmm(m))
            }
        }
    }
}

/// Aligners see per-utterance mean-normalized features so that a constant
/// channel offset does not decide state or component membership.
fn aligner_input(features: &FeatureMatrix) -> FeatureMatrix {
    let mut f = features.clone();
    cepstral_mean_normalize(&mut f);
    f
}

fn group_by_phrase(items: &[Utterance]) -> Result<Vec<(&str, Vec<FeatureMatrix>)>> {
    if items.is_empty() {
        return Err(Error::Input("no utterances to train aligners on".into()));
    }
    let mut groups: BTreeMap<&str, Vec<FeatureMatrix>> = BTreeMap::new();
    for u in items {
        groups.entry(&u.phrase_id).or_default().push(aligner_input(&u.features));
    }
    Ok(groups.into_iter().collect())
}

/// A model-ready utterance: features resampled to the model's frame count
/// plus the alignment computed on them.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub utterance_id: String,
    pub speaker_id: String,
    pub phrase_id: String,
    pub session: u32,
    pub features: FeatureMatrix,
    pub alignment: Option<PhraseAlignment>,
}

impl Utterance {
    pub fn prepare(
        record: &UtteranceRecord,
        raw: &FeatureMatrix,
        frames: usize,
        aligners: Option<&AlignerSet>,
    ) -> Result<Self> {
        let features = if raw.cols() == frames {
            raw.clone()
        } else {
            interpolate_time(raw, frames)?
        };
        let alignment = aligners
            .map(|a| a.align(&record.phrase_id, &features))
            .transpose()?;
        Ok(Self {
            utterance_id: record.utterance_id.clone(),
            speaker_id: record.speaker_id.clone(),
            phrase_id: record.phrase_id.clone(),
            session: record.session,
            features,
            alignment,
        })
    }
}

/// Loads, resamples and aligns every utterance of a partition, in manifest order.
pub fn load_partition(
    manifest: &CorpusManifest,
    partition: Partition,
    frames: usize,
    aligners: Option<&AlignerSet>,
) -> Result<Vec<Utterance>> {
    let records: Vec<&UtteranceRecord> = manifest.partition(partition).collect();
    if records.is_empty() {
        return Err(Error::Input(format!("partition {partition} is empty")));
    }
    records
        .par_iter()
        .map(|r| Utterance::prepare(r, &manifest.load_features(r)?, frames, aligners))
        .collect()
}
