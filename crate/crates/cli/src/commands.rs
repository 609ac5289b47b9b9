use anyhow::{bail, Context, Result};
use log::{info, warn};
use phrasevec::align::{GmmTrainConfig, HmmTrainConfig};
use phrasevec::config::ExperimentConfig;
use phrasevec::corpus::{
    build_trials, enrollment_to_text, generate, ingest, CorpusManifest, Partition, UtteranceRecord, MANIFEST_FILE,
};
use phrasevec::features::{extract_features, write_feature_file, FeatureConfig, Waveform};
use phrasevec::metrics::{det_points, join_scores_with_key, read_key, read_scores, write_det, write_key, write_scores, MetricReport};
use phrasevec::network::{
    init_running_means, load_checkpoint, load_partition, read_embeddings, save_checkpoint, score_trials,
    train_bdk, train_classifier, train_end_to_end, write_embeddings, AlignerSet, ArchType, Model, TrainReport,
};
use phrasevec::rng::substream;
use phrasevec::write_atomic;
use rayon::prelude::*;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const CONFIG_FILE: &str = "config.txt";
pub const CHECKPOINT_FILE: &str = "model.svck";
pub const TRAIN_LOG_FILE: &str = "train_log.txt";
pub const EMBEDDINGS_FILE: &str = "embeddings.svem";
pub const SCORES_FILE: &str = "scores.txt";
pub const KEY_FILE: &str = "key.txt";
pub const ENROLL_FILE: &str = "enroll.txt";
pub const REPORT_FILE: &str = "report.txt";
pub const DET_FILE: &str = "det.txt";

/// Logs the resolved configuration and stores it next to the outputs.
fn record_config(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let text = cfg.to_text();
    for line in text.lines() {
        info!("config: {line}");
    }
    write_atomic(&out.join(CONFIG_FILE), text.as_bytes())?;
    Ok(())
}

pub fn synth(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    record_config(cfg, out)?;
    let manifest = generate(&cfg.synthetic_spec(), out)?;
    info!("wrote {} utterances to {}", manifest.records.len(), out.display());
    Ok(())
}

fn read_wav(path: &Path) -> Result<Waveform> {
    let mut reader = hound::WavReader::open(path).with_context(|| format!("opening {}", path.display()))?;
    let spec = reader.spec();
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader.samples::<f32>().map(|s| s.map(f64::from)).collect::<Result<_, _>>()?,
        hound::SampleFormat::Int => {
            let scale = (1i64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<Result<_, _>>()?
        }
    };
    let ch = spec.channels as usize;
    let mono = interleaved
        .chunks(ch)
        .map(|frame| frame.iter().sum::<f64>() / ch as f64)
        .collect();
    Ok(Waveform::new(mono, spec.sample_rate)?)
}

/// MFCC + deltas + mean normalization for every WAV in the manifest;
/// interpolation to a fixed length happens when features are loaded.
pub fn features(cfg: &ExperimentConfig, manifest: &Path, out: &Path) -> Result<()> {
    record_config(cfg, out)?;
    let input = ingest(manifest)?;
    let fcfg = FeatureConfig {
        target_frames: None,
        ..FeatureConfig::default()
    };
    let feat_dir = out.join("features");
    std::fs::create_dir_all(&feat_dir)?;
    let records: Vec<UtteranceRecord> = input
        .records
        .par_iter()
        .map(|r| {
            let wav = read_wav(&input.resolve(r))?;
            let f = extract_features(&wav, &fcfg).with_context(|| format!("features of {}", r.utterance_id))?;
            let rel = PathBuf::from("features").join(format!("{}.svfm", r.utterance_id));
            write_feature_file(&out.join(&rel), &f)?;
            Ok(UtteranceRecord { path: rel, ..r.clone() })
        })
        .collect::<Result<_>>()?;
    let result = CorpusManifest {
        records,
        base_dir: out.to_path_buf(),
    };
    result.write(&out.join(MANIFEST_FILE))?;
    info!("extracted features for {} utterances", result.records.len());
    Ok(())
}

fn bkg_partition(manifest: &CorpusManifest, cfg: &ExperimentConfig, aligners: Option<&AlignerSet>) -> Result<Vec<phrasevec::network::Utterance>> {
    if manifest.partition(Partition::Bkg).next().is_none() {
        bail!("manifest has no bkg partition to train on");
    }
    Ok(load_partition(manifest, Partition::Bkg, cfg.frames, aligners)?)
}

pub fn train_aligner(
    cfg: &ExperimentConfig,
    manifest: &Path,
    hmm: Option<HmmTrainConfig>,
    gmm: Option<GmmTrainConfig>,
    out: &Path,
) -> Result<()> {
    record_config(cfg, out)?;
    let manifest = ingest(manifest)?;
    let bkg = bkg_partition(&manifest, cfg, None)?;
    let set = match (hmm, gmm) {
        (Some(h), None) => AlignerSet::train_hmm(&bkg, &h)?,
        (None, Some(g)) => AlignerSet::train_gmm(&bkg, &g, cfg.tau, cfg.beta)?,
        _ => bail!("choose exactly one aligner type"),
    };
    let files = set.save(out)?;
    info!("wrote {} aligner files to {}", files.len(), out.display());
    Ok(())
}

fn load_aligners(dir: Option<&Path>) -> Result<Option<AlignerSet>> {
    dir.map(|d| AlignerSet::load(d).with_context(|| format!("loading aligners from {}", d.display())))
        .transpose()
}

fn report_text(r: &TrainReport) -> String {
    let mut out = String::new();
    for (i, l) in r.epoch_losses.iter().enumerate() {
        write!(out, "epoch {} loss {l:?}", i + 1).unwrap();
        if let Some(h) = r.heldout_losses.get(i) {
            write!(out, " heldout {h:?}").unwrap();
        }
        out.push('\n');
    }
    writeln!(out, "final_accuracy {:?}", r.final_accuracy).unwrap();
    writeln!(out, "steps {}", r.steps).unwrap();
    writeln!(out, "skipped_batches {}", r.skipped_batches).unwrap();
    out
}

pub fn train(
    cfg: &mut ExperimentConfig,
    manifest: &Path,
    aligners: Option<&Path>,
    init: Option<&Path>,
    teacher: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let aligners = load_aligners(aligners)?;
    match (&aligners, cfg.arch) {
        (_, ArchType::A) => {}
        (Some(a), _) => {
            if cfg.pooling != a.pooling() {
                info!("pooling {} follows the aligners", a.pooling());
                cfg.pooling = a.pooling();
            }
        }
        (None, arch) => bail!("architecture {arch} needs --aligners"),
    }
    if cfg.arch == ArchType::D && init.is_none() {
        bail!("architecture D starts from an architecture C checkpoint; pass --init");
    }
    if cfg.bdk != teacher.is_some() {
        bail!("teacher-student training needs both bdk = true and --teacher");
    }
    let train_cfg = cfg.train_config()?;
    record_config(cfg, out)?;
    let manifest = ingest(manifest)?;
    let aligners = if cfg.arch == ArchType::A { None } else { aligners };
    let all = bkg_partition(&manifest, cfg, aligners.as_ref())?;
    let last = all.iter().map(|u| u.session).max().unwrap_or(0);
    let cut = last.saturating_sub(cfg.heldout_sessions as u32);
    let (heldout, bkg): (Vec<_>, Vec<_>) = all.into_iter().partition(|u| u.session > cut);
    if bkg.is_empty() {
        bail!("heldout_sessions = {} leaves no training data", cfg.heldout_sessions);
    }
    let speakers = manifest.speakers(Partition::Bkg);
    let input_dims = bkg[0].features.rows();
    let mut rng = substream(cfg.seed, "init");

    let (model, report) = match cfg.arch {
        ArchType::D => {
            let init = init.expect("checked above");
            let pre = load_checkpoint(init)?;
            if pre.config.arch != ArchType::C {
                bail!("--init must be an architecture C checkpoint, got {}", pre.config.arch);
            }
            if pre.config.pooling != cfg.pooling {
                bail!("--init uses {} pooling but the aligners give {}", pre.config.pooling, cfg.pooling);
            }
            let mut model = Model::end_to_end_from(&pre, &cfg.back_end.0, &mut rng)?;
            let report = train_end_to_end(&mut model, &bkg, &train_cfg)?;
            (model, Some(report))
        }
        ArchType::B => {
            let mut model = Model::new(cfg.architecture(input_dims, speakers.len())?, &mut rng)?;
            init_running_means(&mut model, &bkg)?;
            info!("architecture B has no trainable front-end; stored running means only");
            (model, None)
        }
        _ => {
            let mut model = Model::new(cfg.architecture(input_dims, speakers.len())?, &mut rng)?;
            let report = match teacher {
                Some(t) => train_bdk(&load_checkpoint(t)?, &mut model, &bkg, &heldout, &speakers, &train_cfg)?,
                None => train_classifier(&mut model, &bkg, &heldout, &speakers, &train_cfg)?,
            };
            (model, Some(report))
        }
    };
    save_checkpoint(&out.join(CHECKPOINT_FILE), &model)?;
    if let Some(r) = report {
        info!(
            "trained {} epochs, final loss {:?}, accuracy {:.4}",
            r.epoch_losses.len(),
            r.epoch_losses.last(),
            r.final_accuracy
        );
        write_atomic(&out.join(TRAIN_LOG_FILE), report_text(&r).as_bytes())?;
    }
    info!("wrote {}", out.join(CHECKPOINT_FILE).display());
    Ok(())
}

pub fn embed(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    manifest: &Path,
    aligners: Option<&Path>,
    partition: Partition,
    out: &Path,
) -> Result<()> {
    record_config(cfg, out)?;
    let model = load_checkpoint(checkpoint)?;
    let aligners = load_aligners(aligners)?;
    let aligners = match (model.config.arch, aligners) {
        (ArchType::A, _) => None,
        (_, Some(a)) if a.pooling() == model.config.pooling => Some(a),
        (_, Some(a)) => bail!("checkpoint uses {} pooling, aligners give {}", model.config.pooling, a.pooling()),
        (arch, None) => bail!("architecture {arch} needs --aligners"),
    };
    let manifest = ingest(manifest)?;
    let items = load_partition(&manifest, partition, model.config.frames, aligners.as_ref())?;
    if items.is_empty() {
        bail!("partition {partition} is empty");
    }
    let embs = model.embed_all(&items)?;
    write_embeddings(&out.join(EMBEDDINGS_FILE), &embs)?;
    info!("wrote {} embeddings of {} dims", embs.len(), embs[0].values.len());
    Ok(())
}

pub fn score(cfg: &ExperimentConfig, embeddings: &Path, manifest: &Path, partition: Partition, out: &Path) -> Result<()> {
    record_config(cfg, out)?;
    let manifest = ingest(manifest)?;
    let trials = build_trials(&manifest, partition, cfg.enroll_sessions)?;
    if trials.skipped > 0 {
        warn!("{} enrollment models had no test utterances", trials.skipped);
    }
    let vectors: HashMap<String, Vec<f64>> = read_embeddings(embeddings)?.into_iter().collect();
    let phrases: HashMap<String, String> = manifest
        .records
        .iter()
        .map(|r| (r.utterance_id.clone(), r.phrase_id.clone()))
        .collect();
    let scores = score_trials(&trials.models, &trials.trials, &vectors, &phrases)?;
    write_scores(&out.join(SCORES_FILE), &scores)?;
    write_key(&out.join(KEY_FILE), &trials.trials)?;
    write_atomic(&out.join(ENROLL_FILE), enrollment_to_text(&trials.models).as_bytes())?;
    info!("scored {} trials for {} models", scores.len(), trials.models.len());
    Ok(())
}

pub fn eval(cfg: &ExperimentConfig, scores: &Path, key: &Path, out: &Path) -> Result<()> {
    record_config(cfg, out)?;
    let set = join_scores_with_key(&read_scores(scores)?, &read_key(key)?)?;
    let report = MetricReport::compute(&set, cfg.dcf()?)?;
    let text = report.to_string();
    write_atomic(&out.join(REPORT_FILE), text.as_bytes())?;
    write_det(&out.join(DET_FILE), &det_points(&set))?;
    print!("{text}");
    Ok(())
}
