use super::{ArchType, Gradients, LossKind, Model, Pooling, TrainConfig, Utterance};
use crate::align::{Alignment, SoftAlignment};
use crate::error::{input_err, Error, Result};
use crate::features::random_erasing;
use crate::losses::{
    aauc_loss, cross_entropy, exact_auc, mine_hard_from_scores, soft_cross_entropy, triplet_loss,
};
use crate::losses::mining::pair_batch_from_scores;
use crate::nn::{cosine_similarity, cosine_similarity_backward, softmax, Adam, Tensor2D};
use crate::rng::substream;
use log::{debug, info};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use std::collections::{BTreeMap, HashMap};

/// Per-epoch record of a training run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// Mean training loss of each epoch.
    pub epoch_losses: Vec<f64>,
    /// Mean loss on the held-out utterances after each epoch (classifiers only).
    pub heldout_losses: Vec<f64>,
    /// Classification accuracy on the training data after the last epoch
    /// (classifiers), or mean batch exact AUC of the last epoch (end-to-end).
    pub final_accuracy: f64,
    pub steps: u64,
    /// End-to-end batches without a positive or negative pair.
    pub skipped_batches: usize,
}

/// Maps speaker ids to class indices.
pub fn class_index(speakers: &[String]) -> HashMap<&str, usize> {
    speakers.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect()
}

fn labels_for(items: &[Utterance], classes: &HashMap<&str, usize>, n_classes: usize) -> Result<Vec<usize>> {
    items
        .iter()
        .map(|u| {
            let l = *classes
                .get(u.speaker_id.as_str())
                .ok_or_else(|| input_err!("speaker {} is not a training class", u.speaker_id))?;
            if l >= n_classes {
                return Err(input_err!("label {l} outside [0, {n_classes})"));
            }
            Ok(l)
        })
        .collect()
}

fn soft_of(u: &Utterance) -> Option<&SoftAlignment> {
    match u.alignment.as_ref().map(|a| &a.alignment) {
        Some(Alignment::Soft(s)) => Some(s),
        _ => None,
    }
}

/// Creates missing running means for GMM pooling from the current front-end
/// outputs on `items`.
pub fn init_running_means(model: &mut Model, items: &[Utterance]) -> Result<()> {
    if model.config.pooling != Pooling::GmmMap {
        return Ok(());
    }
    let tops: Vec<Tensor2D> = items
        .par_iter()
        .map(|u| model.front_end(&u.features).map(|r| r.2))
        .collect::<Result<_>>()?;
    let mut by_phrase: BTreeMap<&str, Vec<(&Tensor2D, &SoftAlignment)>> = BTreeMap::new();
    for (u, t) in items.iter().zip(&tops) {
        let g = soft_of(u).ok_or_else(|| Error::Usage("GMM pooling needs soft alignments".into()))?;
        by_phrase.entry(&u.phrase_id).or_default().push((t, g));
    }
    for (phrase, batch) in by_phrase {
        model.init_running_mean(phrase, &batch)?;
    }
    Ok(())
}

fn update_running_means(model: &mut Model, batch: &[&Utterance], tops: &[Tensor2D]) -> Result<()> {
    if model.config.pooling != Pooling::GmmMap {
        return Ok(());
    }
    let mut by_phrase: BTreeMap<&str, Vec<(&Tensor2D, &SoftAlignment)>> = BTreeMap::new();
    for (u, t) in batch.iter().zip(tops) {
        if let Some(g) = soft_of(u) {
            by_phrase.entry(&u.phrase_id).or_default().push((t, g));
        }
    }
    for (phrase, items) in by_phrase {
        model
            .running_means
            .get_mut(phrase)
            .ok_or_else(|| Error::Usage(format!("no running mean for phrase {phrase}")))?
            .update(&items)?;
    }
    Ok(())
}

fn training_input(u: &Utterance, cfg: &TrainConfig, epoch: usize) -> Tensor2D {
    match &cfg.erasing {
        Some(e) if e.probability > 0.0 => {
            let mut rng = substream(cfg.seed, &format!("erasing/{epoch}/{}", u.utterance_id));
            random_erasing(&u.features, e, &mut rng)
        }
        _ => u.features.clone(),
    }
}

/// Sums per-item results in item order so the total does not depend on
/// thread scheduling.
fn sum_grads(model: &Model, parts: &[(f64, Gradients)]) -> (f64, Gradients) {
    let mut total = Gradients::zeros_like(model);
    let mut loss = 0.0;
    for (l, g) in parts {
        loss += l;
        total.add(g);
    }
    (loss, total)
}

fn apply_step(model: &mut Model, adam: &mut Adam, grads: &Gradients, scale: f64) -> Result<()> {
    model.zero_grad();
    model.accumulate(grads, scale)?;
    let mut layers = model.layers_mut();
    adam.step(&mut layers)
}

/// Mean cross-entropy and accuracy of a classifier on clean inputs.
pub fn classifier_loss(model: &Model, items: &[Utterance], speakers: &[String]) -> Result<(f64, f64)> {
    let classes = class_index(speakers);
    let labels = labels_for(items, &classes, model.config.n_classes)?;
    let parts: Vec<(f64, bool)> = items
        .par_iter()
        .zip(&labels)
        .map(|(u, &l)| {
            let fwd = model.forward(&u.features, &u.phrase_id, u.alignment.as_ref())?;
            let logits = model.logits(&fwd)?;
            let (loss, _) = cross_entropy(&logits, l)?;
            let best = argmax(&logits);
            Ok((loss, best == l))
        })
        .collect::<Result<_>>()?;
    let n = parts.len().max(1) as f64;
    Ok((
        parts.iter().map(|p| p.0).sum::<f64>() / n,
        parts.iter().filter(|p| p.1).count() as f64 / n,
    ))
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

enum Targets<'a> {
    Hard(&'a [usize]),
    Teacher(&'a Model),
}

fn run_classifier(
    model: &mut Model,
    train: &[Utterance],
    heldout: &[Utterance],
    speakers: &[String],
    cfg: &TrainConfig,
    targets: Targets<'_>,
) -> Result<TrainReport> {
    cfg.validate()?;
    if model.config.arch == ArchType::D {
        return Err(Error::Config("architecture D is trained end to end".into()));
    }
    if train.is_empty() {
        return Err(input_err!("no training utterances"));
    }
    init_running_means(model, train)?;
    let mut adam = Adam::new(cfg.adam);
    let mut report = TrainReport::default();
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut substream(cfg.seed, &format!("batch-order/{epoch}")));
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Utterance> = chunk.iter().map(|&i| &train[i]).collect();
            let frozen: &Model = model;
            let parts: Vec<(f64, Gradients, Tensor2D)> = chunk
                .par_iter()
                .map(|&i| {
                    let u = &train[i];
                    let (target, input) = match &targets {
                        Targets::Hard(_) => (None, training_input(u, cfg, epoch)),
                        Targets::Teacher(teacher) => {
                            let noisy = training_input(u, cfg, epoch);
                            let tf = teacher.forward(&noisy, &u.phrase_id, u.alignment.as_ref())?;
                            let logits = teacher.logits(&tf)?;
                            (Some(teacher_targets(&logits, cfg.temperature)), u.features.clone())
                        }
                    };
                    let fwd = frozen.forward(&input, &u.phrase_id, u.alignment.as_ref())?;
                    let logits = frozen.logits(&fwd)?;
                    let (loss, d) = match (&targets, target) {
                        (Targets::Hard(labels), _) => cross_entropy(&logits, labels[i])?,
                        (_, Some(t)) => soft_cross_entropy(&logits, &t)?,
                        _ => unreachable!("teacher targets are always computed"),
                    };
                    let g = frozen.backward_logits(&fwd, &u.phrase_id, u.alignment.as_ref(), &d)?;
                    Ok((loss, g, fwd.top))
                })
                .collect::<Result<_>>()?;
            let (tops, pairs): (Vec<Tensor2D>, Vec<(f64, Gradients)>) =
                parts.into_iter().map(|(l, g, t)| (t, (l, g))).unzip();
            let (loss, grads) = sum_grads(model, &pairs);
            apply_step(model, &mut adam, &grads, 1.0 / chunk.len() as f64)?;
            update_running_means(model, &batch, &tops)?;
            epoch_loss += loss;
        }
        let mean = epoch_loss / train.len() as f64;
        report.epoch_losses.push(mean);
        if !heldout.is_empty() {
            let (l, _) = classifier_loss(model, heldout, speakers)?;
            report.heldout_losses.push(l);
        }
        debug!("epoch {epoch}: train loss {mean:.5}");
    }
    report.steps = adam.steps();
    report.final_accuracy = classifier_loss(model, train, speakers)?.1;
    info!(
        "trained architecture {} for {} steps, final training accuracy {:.3}",
        model.config.arch, report.steps, report.final_accuracy
    );
    Ok(report)
}

/// Soft labels from teacher logits; temperature 0 gives the one-hot argmax.
pub fn teacher_targets(logits: &[f64], temperature: f64) -> Vec<f64> {
    if temperature == 0.0 {
        let mut t = vec![0.0; logits.len()];
        t[argmax(logits)] = 1.0;
        return t;
    }
    let scaled: Vec<f64> = logits.iter().map(|l| l / temperature).collect();
    softmax(&scaled)
}

/// Cross-entropy training of a speaker classifier (architectures A, B, C).
/// Class `i` is `speakers[i]`.
pub fn train_classifier(
    model: &mut Model,
    train: &[Utterance],
    heldout: &[Utterance],
    speakers: &[String],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    let labels = labels_for(train, &class_index(speakers), model.config.n_classes)?;
    run_classifier(model, train, heldout, speakers, cfg, Targets::Hard(&labels))
}

/// Teacher-student training: the teacher sees erased inputs and provides
/// soft targets, the student learns from them on clean inputs.
pub fn train_bdk(
    teacher: &Model,
    student: &mut Model,
    train: &[Utterance],
    heldout: &[Utterance],
    speakers: &[String],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if teacher.config.n_classes != student.config.n_classes {
        return Err(Error::Config(format!(
            "teacher has {} classes, student {}",
            teacher.config.n_classes, student.config.n_classes
        )));
    }
    labels_for(train, &class_index(speakers), student.config.n_classes)?;
    run_classifier(student, train, heldout, speakers, cfg, Targets::Teacher(teacher))
}

/// Statistics of one end-to-end batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchStats {
    pub exact_auc: f64,
    pub aauc: f64,
}

/// Loss and parameter gradients of one phrase-homogeneous batch scored by
/// cosine similarity of the model outputs. Returns `None` when the batch has
/// no positive or no negative pair.
pub fn pair_batch_loss(
    model: &Model,
    batch: &[&Utterance],
    inputs: &[Tensor2D],
    cfg: &TrainConfig,
) -> Result<Option<(f64, Gradients, BatchStats)>> {
    if let Some(u) = batch.iter().find(|u| u.phrase_id != batch[0].phrase_id) {
        return Err(input_err!("batch mixes phrases {} and {}", batch[0].phrase_id, u.phrase_id));
    }
    let fwds: Vec<_> = batch
        .par_iter()
        .zip(inputs)
        .map(|(u, x)| model.forward(x, &u.phrase_id, u.alignment.as_ref()))
        .collect::<Result<_>>()?;
    let n = batch.len();
    let mut scores = Tensor2D::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let s = cosine_similarity(&fwds[i].output, &fwds[j].output)?;
            scores.set(i, j, s);
            scores.set(j, i, s);
        }
    }
    let speakers: Vec<&str> = batch.iter().map(|u| u.speaker_id.as_str()).collect();
    let pairs = match pair_batch_from_scores(
        &speakers,
        &scores,
        cfg.max_positive_pairs,
        cfg.max_negative_pairs,
    ) {
        Ok(p) => p,
        Err(_) => return Ok(None),
    };
    let stats = BatchStats {
        exact_auc: exact_auc(&pairs.positive, &pairs.negative)?,
        aauc: aauc_loss(&pairs.positive, &pairs.negative, cfg.alpha)?.value,
    };
    // d loss / d score for each scored pair
    let mut d_scores: Vec<((usize, usize), f64)> = Vec::new();
    let loss = match cfg.loss {
        LossKind::Aauc => {
            let out = aauc_loss(&pairs.positive, &pairs.negative, cfg.alpha)?;
            for (p, g) in pairs.positive_pairs.iter().zip(&out.grad_pos) {
                d_scores.push((*p, -g));
            }
            for (p, g) in pairs.negative_pairs.iter().zip(&out.grad_neg) {
                d_scores.push((*p, -g));
            }
            1.0 - out.value
        }
        LossKind::Triplet => {
            let mined = mine_hard_from_scores(&speakers, &scores);
            if mined.triplets.is_empty() {
                return Ok(None);
            }
            let m = mined.triplets.len() as f64;
            let mut total = 0.0;
            for t in &mined.triplets {
                let (l, d_ap, d_an) = triplet_loss(t.score_ap, t.score_an, cfg.margin);
                total += l / m;
                d_scores.push(((t.anchor, t.positive), d_ap / m));
                d_scores.push(((t.anchor, t.negative), d_an / m));
            }
            total
        }
        LossKind::CrossEntropy => {
            return Err(Error::Config("end-to-end training uses triplet or aauc loss".into()))
        }
    };
    let dim = fwds[0].output.len();
    let mut d_out = vec![vec![0.0; dim]; n];
    for ((i, j), g) in d_scores {
        if g == 0.0 {
            continue;
        }
        let (gi, gj) = cosine_similarity_backward(&fwds[i].output, &fwds[j].output, g)?;
        d_out[i].iter_mut().zip(&gi).for_each(|(a, b)| *a += b);
        d_out[j].iter_mut().zip(&gj).for_each(|(a, b)| *a += b);
    }
    let parts: Vec<(f64, Gradients)> = batch
        .par_iter()
        .zip(&fwds)
        .zip(&d_out)
        .map(|((u, f), d)| {
            model
                .backward_output(f, &u.phrase_id, u.alignment.as_ref(), d)
                .map(|g| (0.0, g))
        })
        .collect::<Result<_>>()?;
    let (_, grads) = sum_grads(model, &parts);
    Ok(Some((loss, grads, stats)))
}

/// Phrase-homogeneous batches for one epoch: each phrase's utterances are
/// shuffled and cut into `batch_size` chunks, then the batch order is shuffled.
pub fn phrase_batches(items: &[Utterance], batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut by_phrase: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, u) in items.iter().enumerate() {
        by_phrase.entry(&u.phrase_id).or_default().push(i);
    }
    let mut batches = Vec::new();
    for (phrase, mut idx) in by_phrase {
        idx.shuffle(&mut substream(seed, &format!("batch-order/{epoch}/{phrase}")));
        batches.extend(idx.chunks(batch_size).map(|c| c.to_vec()));
    }
    batches.shuffle(&mut substream(seed, &format!("batch-order/{epoch}")));
    batches
}

/// Joint training of front-end and back-end of an architecture-D model with
/// triplet or aAUC loss. Running means stay frozen.
pub fn train_end_to_end(model: &mut Model, train: &[Utterance], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if model.config.arch != ArchType::D {
        return Err(Error::Config("end-to-end training needs an architecture D model".into()));
    }
    if train.is_empty() {
        return Err(input_err!("no training utterances"));
    }
    let mut adam = Adam::new(cfg.adam);
    let mut report = TrainReport::default();
    for epoch in 0..cfg.epochs {
        let mut epoch_loss = 0.0;
        let mut used = 0usize;
        let mut auc_sum = 0.0;
        for idx in phrase_batches(train, cfg.batch_size, cfg.seed, epoch) {
            let batch: Vec<&Utterance> = idx.iter().map(|&i| &train[i]).collect();
            let inputs: Vec<Tensor2D> = batch.iter().map(|u| training_input(u, cfg, epoch)).collect();
            match pair_batch_loss(model, &batch, &inputs, cfg)? {
                None => report.skipped_batches += 1,
                Some((loss, grads, stats)) => {
                    apply_step(model, &mut adam, &grads, 1.0)?;
                    epoch_loss += loss;
                    auc_sum += stats.exact_auc;
                    used += 1;
                }
            }
        }
        let mean = epoch_loss / used.max(1) as f64;
        report.epoch_losses.push(mean);
        report.final_accuracy = auc_sum / used.max(1) as f64;
        debug!("epoch {epoch}: loss {mean:.5}, batch AUC {:.4}", report.final_accuracy);
    }
    report.steps = adam.steps();
    info!(
        "end-to-end training ({}) for {} steps, last-epoch batch AUC {:.4}",
        cfg.loss, report.steps, report.final_accuracy
    );
    Ok(report)
}
