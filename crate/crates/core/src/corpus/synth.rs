use super::manifest::boundaries_to_text;
use super::{CorpusManifest, Partition, UtteranceRecord};
use crate::binio::write_atomic;
use crate::error::{Error, Result};
use crate::features::{write_feature_file, FeatureMatrix};
use crate::nn::Tensor2D;
use crate::rng::substream;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::path::{Path, PathBuf};

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const BOUNDARIES_FILE: &str = "boundaries.txt";

/// Parameters of the synthetic speaker x phrase corpus.
///
/// In the informative dimensions, frame `t` of an utterance in segment `q`
/// is `phonetic[q] + color * speaker[q] + offset + noise`. Both templates
/// are per phrase and centered over segments, and in every dimension the
/// speaker template is orthogonal to the phonetic one across segments.
/// `color` and `offset` are per speaker. A coloring is `color_scale` times
/// the signs of a random direction drawn from a subspace of dimension
/// `speaker_rank` (full rank when 0), so every speaker puts the same energy
/// in every dimension and identity is only visible relative to the segment
/// order. The last `nuisance_dims` dimensions carry only a per-utterance
/// channel offset plus noise.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub speakers: usize,
    pub phrases: usize,
    pub sessions: usize,
    pub segments: usize,
    pub dims: usize,
    pub min_dwell: usize,
    pub max_dwell: usize,
    pub noise: f64,
    pub offset_scale: f64,
    pub color_scale: f64,
    pub channel_scale: f64,
    pub nuisance_dims: usize,
    pub speaker_rank: usize,
    pub bkg_speakers: usize,
    pub dev_speakers: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            speakers: 20,
            phrases: 5,
            sessions: 9,
            segments: 8,
            dims: 60,
            min_dwell: 4,
            max_dwell: 8,
            noise: 1.0,
            offset_scale: 0.1,
            color_scale: 1.0,
            channel_scale: 2.0,
            nuisance_dims: 20,
            speaker_rank: 6,
            bkg_speakers: 10,
            dev_speakers: 2,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let mut p = Vec::new();
        if self.speakers < 2 {
            p.push("at least 2 speakers are required".to_string());
        }
        if self.phrases == 0 || self.sessions == 0 || self.dims == 0 {
            p.push("phrases, sessions and dims must be positive".to_string());
        }
        if self.segments < 2 {
            p.push("at least 2 segments per phrase are required".to_string());
        }
        if self.min_dwell == 0 || self.min_dwell > self.max_dwell {
            p.push(format!("bad dwell range {}..={}", self.min_dwell, self.max_dwell));
        }
        for (name, v) in [
            ("noise", self.noise),
            ("offset_scale", self.offset_scale),
            ("color_scale", self.color_scale),
            ("channel_scale", self.channel_scale),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                p.push(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        if self.nuisance_dims > self.dims {
            p.push("nuisance_dims exceeds dims".to_string());
        }
        if self.bkg_speakers + self.dev_speakers > self.speakers {
            p.push("bkg + dev speakers exceed the speaker count".to_string());
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(p))
        }
    }

    pub fn partition_of(&self, speaker: usize) -> Partition {
        if speaker < self.bkg_speakers {
            Partition::Bkg
        } else if speaker < self.bkg_speakers + self.dev_speakers {
            Partition::Dev
        } else {
            Partition::Eval
        }
    }

    /// Per-phrase `(phonetic, speaker)` templates, each `segments x dims`.
    pub fn template(&self, phrase: usize) -> (Tensor2D, Tensor2D) {
        let mut rng = substream(self.seed, &format!("corpus/phrase/{phrase}"));
        let mut draw = || {
            let mut t = Tensor2D::zeros(self.dims, self.segments);
            for v in t.as_mut_slice() {
                *v = rng.sample(StandardNormal);
            }
            t
        };
        // rows are dimensions here so each one is a vector over segments
        let mut phonetic = draw();
        let mut speaker = draw();
        let n = self.segments as f64;
        for d in 0..self.dims {
            let a = phonetic.row_mut(d);
            let mean = a.iter().sum::<f64>() / n;
            a.iter_mut().for_each(|v| *v -= mean);
            let a = phonetic.row(d).to_vec();
            let aa: f64 = a.iter().map(|v| v * v).sum();
            let b = speaker.row_mut(d);
            let mean = b.iter().sum::<f64>() / n;
            b.iter_mut().for_each(|v| *v -= mean);
            let ab: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
            if aa > 0.0 {
                b.iter_mut().zip(&a).for_each(|(y, x)| *y -= ab / aa * x);
            }
            let bb: f64 = b.iter().map(|v| v * v).sum();
            if bb > 0.0 {
                let scale = (aa / bb).sqrt();
                b.iter_mut().for_each(|y| *y *= scale);
            }
        }
        (phonetic.transpose(), speaker.transpose())
    }

    /// Basis of the speaker coloring subspace (`dims x rank`), scaled so
    /// each coordinate of a coloring has unit variance.
    fn speaker_basis(&self) -> Option<Tensor2D> {
        if self.speaker_rank == 0 {
            return None;
        }
        let mut rng = substream(self.seed, "corpus/speaker-basis");
        let scale = 1.0 / (self.speaker_rank as f64).sqrt();
        let mut b = Tensor2D::zeros(self.dims, self.speaker_rank);
        for v in b.as_mut_slice() {
            *v = scale * rng.sample::<f64, _>(StandardNormal);
        }
        Some(b)
    }

    /// Per-speaker `(color, offset)` vectors.
    pub fn speaker_traits(&self, speaker: usize) -> (Vec<f64>, Vec<f64>) {
        let mut rng = substream(self.seed, &format!("corpus/speaker/{speaker}"));
        let direction: Vec<f64> = match self.speaker_basis() {
            None => (0..self.dims).map(|_| rng.sample(StandardNormal)).collect(),
            Some(b) => {
                let z: Vec<f64> = (0..self.speaker_rank).map(|_| rng.sample(StandardNormal)).collect();
                (0..self.dims)
                    .map(|d| b.row(d).iter().zip(&z).map(|(u, v)| u * v).sum())
                    .collect()
            }
        };
        let color = direction.iter().map(|v| self.color_scale * v.signum()).collect();
        let offset = (0..self.dims)
            .map(|_| self.offset_scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        (color, offset)
    }

    pub fn utterance_id(speaker: usize, phrase: usize, session: usize) -> String {
        format!("spk{speaker:02}_ph{phrase}_s{session}")
    }

    /// One utterance and its segment start frames.
    pub fn render(
        &self,
        template: &(Tensor2D, Tensor2D),
        traits: &(Vec<f64>, Vec<f64>),
        utterance_id: &str,
    ) -> (FeatureMatrix, Vec<usize>) {
        let mut rng = substream(self.seed, &format!("corpus/utt/{utterance_id}"));
        let dwell: Vec<usize> = (0..self.segments)
            .map(|_| rng.random_range(self.min_dwell..=self.max_dwell))
            .collect();
        let first_nuisance = self.dims - self.nuisance_dims;
        let channel: Vec<f64> = (0..self.dims)
            .map(|d| {
                if d >= first_nuisance {
                    self.channel_scale * rng.sample::<f64, _>(StandardNormal)
                } else {
                    0.0
                }
            })
            .collect();
        let frames: usize = dwell.iter().sum();
        let mut x = Tensor2D::zeros(self.dims, frames);
        let mut bounds = Vec::with_capacity(self.segments);
        let mut t = 0;
        let (color, offset) = traits;
        for (q, &n) in dwell.iter().enumerate() {
            bounds.push(t);
            for _ in 0..n {
                for d in 0..self.dims {
                    let e: f64 = rng.sample(StandardNormal);
                    let v = if d < first_nuisance {
                        template.0.get(q, d)
                            + color[d] * template.1.get(q, d)
                            + offset[d]
                            + self.noise * e
                    } else {
                        channel[d] + self.noise * e
                    };
                    x.set(d, t, v);
                }
                t += 1;
            }
        }
        (x, bounds)
    }
}

/// Writes the corpus under `out_dir`: one feature file per utterance in
/// `features/`, the manifest and the ground-truth boundaries file.
/// Sessions are numbered from 1.
pub fn generate(spec: &SyntheticSpec, out_dir: &Path) -> Result<CorpusManifest> {
    spec.validate()?;
    let feat_dir = out_dir.join("features");
    std::fs::create_dir_all(&feat_dir)?;
    let templates: Vec<(Tensor2D, Tensor2D)> = (0..spec.phrases).map(|p| spec.template(p)).collect();
    let traits: Vec<_> = (0..spec.speakers).map(|s| spec.speaker_traits(s)).collect();

    let mut jobs = Vec::with_capacity(spec.speakers * spec.phrases * spec.sessions);
    for s in 0..spec.speakers {
        for p in 0..spec.phrases {
            for r in 1..=spec.sessions {
                jobs.push((s, p, r));
            }
        }
    }
    let results: Vec<Result<(UtteranceRecord, Vec<usize>)>> = jobs
        .par_iter()
        .map(|&(s, p, r)| {
            let id = SyntheticSpec::utterance_id(s, p, r);
            let (x, bounds) = spec.render(&templates[p], &traits[s], &id);
            let rel = PathBuf::from("features").join(format!("{id}.svfm"));
            write_feature_file(&out_dir.join(&rel), &x)?;
            Ok((
                UtteranceRecord {
                    utterance_id: id,
                    speaker_id: format!("spk{s:02}"),
                    phrase_id: format!("ph{p}"),
                    session: r as u32,
                    partition: spec.partition_of(s),
                    path: rel,
                },
                bounds,
            ))
        })
        .collect();
    let mut records = Vec::with_capacity(results.len());
    let mut bounds = Vec::with_capacity(results.len());
    for r in results {
        let (rec, b) = r?;
        bounds.push((rec.utterance_id.clone(), b));
        records.push(rec);
    }
    let manifest = CorpusManifest {
        records,
        base_dir: out_dir.to_path_buf(),
    };
    manifest.write(&out_dir.join(MANIFEST_FILE))?;
    write_atomic(&out_dir.join(BOUNDARIES_FILE), boundaries_to_text(&bounds).as_bytes())?;
    Ok(manifest)
}
