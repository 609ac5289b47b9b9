use super::{ArchType, ArchitectureConfig, PhraseAlignment, Pooling};
use crate::align::{
    average_pool, average_pool_backward, hmm_pool, hmm_pool_backward, map_pool, map_pool_backward,
    Alignment, RunningMean, SoftAlignment, Supervector,
};
use crate::error::{shape_err, Error, Result};
use crate::nn::{relu_backward, relu_forward, Conv1d, Dense, LayerParams, ParamGrads, Tensor2D};
use rand::Rng;
use std::collections::BTreeMap;

/// Front-end, pooling and head or back-end of one architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ArchitectureConfig,
    pub convs: Vec<Conv1d>,
    /// Softmax classifier over training speakers (A, B, C).
    pub head: Option<Dense>,
    /// Dense back-end (D).
    pub back_end: Vec<Dense>,
    /// Per-phrase MAP prior in front-end output space (GMM pooling only).
    pub running_means: BTreeMap<String, RunningMean>,
}

/// Intermediate values of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    conv_inputs: Vec<Tensor2D>,
    conv_pre: Vec<Tensor2D>,
    /// Frame-level features entering the pooling layer.
    pub top: Tensor2D,
    /// Flattened supervector (or average) leaving the pooling layer.
    pub embedding: Vec<f64>,
    back_inputs: Vec<Vec<f64>>,
    back_pre: Vec<Vec<f64>>,
    /// Back-end output for D, the embedding otherwise.
    pub output: Vec<f64>,
}

/// Parameter gradients in the layout of [`Model::layers_mut`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub convs: Vec<ParamGrads>,
    pub head: Option<ParamGrads>,
    pub back_end: Vec<ParamGrads>,
}

impl Gradients {
    pub fn zeros_like(model: &Model) -> Self {
        Self {
            convs: model.convs.iter().map(|c| ParamGrads::zeros_like(&c.params)).collect(),
            head: model.head.as_ref().map(|h| ParamGrads::zeros_like(&h.params)),
            back_end: model.back_end.iter().map(|d| ParamGrads::zeros_like(&d.params)).collect(),
        }
    }

    fn all_mut(&mut self) -> Vec<&mut ParamGrads> {
        self.convs
            .iter_mut()
            .chain(self.head.as_mut())
            .chain(self.back_end.iter_mut())
            .collect()
    }

    fn all(&self) -> Vec<&ParamGrads> {
        self.convs.iter().chain(self.head.as_ref()).chain(self.back_end.iter()).collect()
    }

    /// `self += other`, layer by layer.
    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.all_mut().into_iter().zip(other.all()) {
            for (x, y) in a.weights.as_mut_slice().iter_mut().zip(b.weights.as_slice()) {
                *x += y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.all()
            .into_iter()
            .flat_map(|g| g.weights.as_slice().iter().chain(&g.bias).copied().collect::<Vec<_>>())
            .collect()
    }

    /// L2 norm of each conv layer's gradient, input side first.
    pub fn conv_norms(&self) -> Vec<f64> {
        self.convs.iter().map(|g| g.norm()).collect()
    }
}

fn relu_vec(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x.max(0.0)).collect()
}

impl Model {
    /// Fresh model with He-initialized layers.
    pub fn new<R: Rng + ?Sized>(config: ArchitectureConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut convs = Vec::with_capacity(config.front_end.len());
        let mut channels = config.input_dims;
        for spec in &config.front_end {
            convs.push(Conv1d::init(channels, spec.channels, spec.kernel, rng)?);
            channels = spec.channels;
        }
        let emb = config.embedding_dims();
        let head = (config.arch != ArchType::D).then(|| Dense::init(emb, config.n_classes, rng));
        let mut back_end = Vec::new();
        let mut width = emb;
        for &w in &config.back_end {
            back_end.push(Dense::init(width, w, rng));
            width = w;
        }
        Ok(Self {
            config,
            convs,
            head,
            back_end,
            running_means: BTreeMap::new(),
        })
    }

    /// Architecture D built on a trained architecture-C model: the front-end
    /// and running means are copied, the classifier is replaced by a fresh
    /// dense back-end.
    pub fn end_to_end_from<R: Rng + ?Sized>(
        pretrained: &Model,
        back_end: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        if pretrained.config.arch != ArchType::C {
            return Err(Error::Config(format!(
                "architecture D starts from an architecture C model, got {}",
                pretrained.config.arch
            )));
        }
        let config = ArchitectureConfig {
            arch: ArchType::D,
            back_end: back_end.to_vec(),
            n_classes: 0,
            ..pretrained.config.clone()
        };
        config.validate()?;
        let mut width = config.embedding_dims();
        let mut layers = Vec::new();
        for &w in back_end {
            layers.push(Dense::init(width, w, rng));
            width = w;
        }
        Ok(Self {
            config,
            convs: pretrained.convs.clone(),
            head: None,
            back_end: layers,
            running_means: pretrained.running_means.clone(),
        })
    }

    /// Trainable layers in a fixed order: convs, head, back-end.
    pub fn layers_mut(&mut self) -> Vec<&mut LayerParams> {
        self.convs
            .iter_mut()
            .map(|c| &mut c.params)
            .chain(self.head.as_mut().map(|h| &mut h.params))
            .chain(self.back_end.iter_mut().map(|d| &mut d.params))
            .collect()
    }

    pub fn layers(&self) -> Vec<&LayerParams> {
        self.convs
            .iter()
            .map(|c| &c.params)
            .chain(self.head.as_ref().map(|h| &h.params))
            .chain(self.back_end.iter().map(|d| &d.params))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers().iter().map(|l| l.num_params()).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.layers()
            .into_iter()
            .flat_map(|l| l.weights.as_slice().iter().chain(&l.bias).copied().collect::<Vec<_>>())
            .collect()
    }

    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_params() {
            return Err(shape_err!("{} values for {} parameters", values.len(), self.num_params()));
        }
        let mut it = values.iter();
        for l in self.layers_mut() {
            for w in l.weights.as_mut_slice() {
                *w = *it.next().expect("length checked");
            }
            for b in &mut l.bias {
                *b = *it.next().expect("length checked");
            }
        }
        Ok(())
    }

    /// Runs the front-end only.
    pub fn front_end(&self, x: &Tensor2D) -> Result<(Vec<Tensor2D>, Vec<Tensor2D>, Tensor2D)> {
        if x.rows() != self.config.input_dims {
            return Err(shape_err!(
                "model expects {} feature dims, got {}",
                self.config.input_dims,
                x.rows()
            ));
        }
        let mut inputs = Vec::with_capacity(self.convs.len());
        let mut pre = Vec::with_capacity(self.convs.len());
        let mut h = x.clone();
        let last = self.convs.len().saturating_sub(1);
        for (i, conv) in self.convs.iter().enumerate() {
            let z = conv.forward(&h)?;
            let next = if i < last { relu_forward(&z) } else { z.clone() };
            inputs.push(std::mem::replace(&mut h, next));
            pre.push(z);
        }
        Ok((inputs, pre, h))
    }

    fn check_alignment<'a>(
        &self,
        phrase: &str,
        alignment: Option<&'a PhraseAlignment>,
    ) -> Result<Option<&'a Alignment>> {
        if self.config.pooling == Pooling::Avg {
            return Ok(None);
        }
        let a = alignment.ok_or_else(|| {
            Error::Usage(format!("{} pooling needs an alignment", self.config.pooling))
        })?;
        if a.phrase_id != phrase {
            return Err(Error::Usage(format!(
                "utterance of phrase {phrase} aligned with the model of phrase {}",
                a.phrase_id
            )));
        }
        Ok(Some(&a.alignment))
    }

    fn running_mean(&self, phrase: &str) -> Result<&RunningMean> {
        self.running_means
            .get(phrase)
            .ok_or_else(|| Error::Usage(format!("no running mean for phrase {phrase}")))
    }

    fn pool(&self, top: &Tensor2D, phrase: &str, alignment: Option<&Alignment>) -> Result<Supervector> {
        match (self.config.pooling, alignment) {
            (Pooling::Avg, _) => Ok(average_pool(top)),
            (Pooling::Hmm, Some(Alignment::Hard(a))) => hmm_pool(top, a),
            (Pooling::GmmMap, Some(Alignment::Soft(g))) => {
                map_pool(top, g, self.running_mean(phrase)?, self.config.tau)
            }
            (p, _) => Err(Error::Usage(format!("alignment kind does not match {p} pooling"))),
        }
    }

    fn pool_backward(
        &self,
        top: &Tensor2D,
        phrase: &str,
        alignment: Option<&Alignment>,
        upstream: &Supervector,
    ) -> Result<Tensor2D> {
        match (self.config.pooling, alignment) {
            (Pooling::Avg, _) => average_pool_backward(top, upstream),
            (Pooling::Hmm, Some(Alignment::Hard(a))) => hmm_pool_backward(top, a, upstream),
            (Pooling::GmmMap, Some(Alignment::Soft(g))) => {
                map_pool_backward(top, g, self.running_mean(phrase)?, self.config.tau, upstream)
            }
            (p, _) => Err(Error::Usage(format!("alignment kind does not match {p} pooling"))),
        }
    }

    /// Full forward pass of one utterance.
    pub fn forward(
        &self,
        x: &Tensor2D,
        phrase: &str,
        alignment: Option<&PhraseAlignment>,
    ) -> Result<Forward> {
        let align = self.check_alignment(phrase, alignment)?;
        let (conv_inputs, conv_pre, top) = self.front_end(x)?;
        if let Some(a) = align {
            if a.frames() != top.cols() {
                return Err(shape_err!("alignment has {} frames, features {}", a.frames(), top.cols()));
            }
        }
        let embedding = self.pool(&top, phrase, align)?.into_vec();
        let mut back_inputs = Vec::with_capacity(self.back_end.len());
        let mut back_pre = Vec::with_capacity(self.back_end.len());
        let mut h = embedding.clone();
        let last = self.back_end.len().saturating_sub(1);
        for (i, layer) in self.back_end.iter().enumerate() {
            let z = layer.forward(&h)?;
            let next = if i < last { relu_vec(&z) } else { z.clone() };
            back_inputs.push(std::mem::replace(&mut h, next));
            back_pre.push(z);
        }
        Ok(Forward {
            conv_inputs,
            conv_pre,
            top,
            embedding,
            back_inputs,
            back_pre,
            output: h,
        })
    }

    pub fn logits(&self, fwd: &Forward) -> Result<Vec<f64>> {
        self.head
            .as_ref()
            .ok_or_else(|| Error::Usage(format!("architecture {} has no classifier", self.config.arch)))?
            .forward(&fwd.embedding)
    }

    /// Backpropagates a gradient on the pooled embedding through the front-end.
    fn backward_embedding(
        &self,
        fwd: &Forward,
        phrase: &str,
        alignment: Option<&PhraseAlignment>,
        d_embedding: &[f64],
        grads: &mut Gradients,
    ) -> Result<()> {
        if self.convs.is_empty() {
            return Ok(());
        }
        let align = self.check_alignment(phrase, alignment)?;
        let feat = self.config.feature_dims();
        let up = Supervector::from_flat(d_embedding.len() / feat, feat, d_embedding.to_vec())?;
        let mut d = self.pool_backward(&fwd.top, phrase, align, &up)?;
        let last = self.convs.len() - 1;
        for i in (0..self.convs.len()).rev() {
            if i < last {
                d = relu_backward(&fwd.conv_pre[i], &d)?;
            }
            let (d_in, g) = self.convs[i].backward(&fwd.conv_inputs[i], &d)?;
            grads.convs[i] = g;
            d = d_in;
        }
        Ok(())
    }

    /// Gradients for a loss whose derivative with respect to the logits is `d_logits`.
    pub fn backward_logits(
        &self,
        fwd: &Forward,
        phrase: &str,
        alignment: Option<&PhraseAlignment>,
        d_logits: &[f64],
    ) -> Result<Gradients> {
        let head = self
            .head
            .as_ref()
            .ok_or_else(|| Error::Usage("model has no classifier".into()))?;
        let mut grads = Gradients::zeros_like(self);
        let (d_emb, g) = head.backward(&fwd.embedding, d_logits)?;
        grads.head = Some(g);
        self.backward_embedding(fwd, phrase, alignment, &d_emb, &mut grads)?;
        Ok(grads)
    }

    /// Gradients for a loss whose derivative with respect to the scored
    /// output vector is `d_output`.
    pub fn backward_output(
        &self,
        fwd: &Forward,
        phrase: &str,
        alignment: Option<&PhraseAlignment>,
        d_output: &[f64],
    ) -> Result<Gradients> {
        let mut grads = Gradients::zeros_like(self);
        let mut d = d_output.to_vec();
        let last = self.back_end.len().saturating_sub(1);
        for i in (0..self.back_end.len()).rev() {
            if i < last {
                for (g, &z) in d.iter_mut().zip(&fwd.back_pre[i]) {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            let (d_in, g) = self.back_end[i].backward(&fwd.back_inputs[i], &d)?;
            grads.back_end[i] = g;
            d = d_in;
        }
        self.backward_embedding(fwd, phrase, alignment, &d, &mut grads)?;
        Ok(grads)
    }

    /// Adds `scale * grads` into the layers' gradient buffers.
    pub fn accumulate(&mut self, grads: &Gradients, scale: f64) -> Result<()> {
        for (layer, g) in self.layers_mut().into_iter().zip(grads.all()) {
            layer.accumulate(g, scale)?;
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for l in self.layers_mut() {
            l.zero_grad();
        }
    }

    /// Initializes missing per-phrase running means from the posterior-weighted
    /// mean of the given front-end outputs. Components without mass fall back
    /// to the mean of all frames.
    pub fn init_running_mean(&mut self, phrase: &str, items: &[(&Tensor2D, &SoftAlignment)]) -> Result<()> {
        if self.running_means.contains_key(phrase) || items.is_empty() {
            return Ok(());
        }
        let dims = items[0].0.rows();
        let c = items[0].1.components();
        let mut all = vec![0.0; dims];
        let mut frames = 0usize;
        for (x, _) in items {
            for (d, a) in all.iter_mut().enumerate() {
                *a += x.row(d).iter().sum::<f64>();
            }
            frames += x.cols();
        }
        all.iter_mut().for_each(|a| *a /= frames as f64);
        let mut means = Tensor2D::zeros(c, dims);
        for k in 0..c {
            means.row_mut(k).copy_from_slice(&all);
        }
        // first update with full weight replaces every component that has mass
        let mut rm = RunningMean::new(means, 1.0)?;
        rm.update(items)?;
        rm.beta = self.config.beta;
        rm.batches = 0;
        self.running_means.insert(phrase.to_string(), rm);
        Ok(())
    }
}
