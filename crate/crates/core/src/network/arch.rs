use crate::error::{Error, Result};
use crate::features::ErasingConfig;
use crate::nn::AdamConfig;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArchType {
    /// CNN front-end, average pooling, softmax classifier.
    A,
    /// Alignment pooling directly on the input features.
    B,
    /// CNN front-end followed by alignment pooling, softmax classifier.
    C,
    /// Pretrained C plus a two-layer dense back-end scored by cosine.
    D,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pooling {
    Avg,
    Hmm,
    GmmMap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    CrossEntropy,
    Triplet,
    Aauc,
}

macro_rules! string_enum {
    ($t:ty, $what:literal, $($v:path => $s:literal),+ $(,)?) => {
        impl $t {
            pub fn as_str(self) -> &'static str {
                match self { $($v => $s),+ }
            }
        }
        impl FromStr for $t {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($s => Ok($v),)+
                    _ => Err(Error::Config(format!(concat!("unknown ", $what, " {:?}"), s))),
                }
            }
        }
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

string_enum!(ArchType, "architecture", ArchType::A => "A", ArchType::B => "B", ArchType::C => "C", ArchType::D => "D");
string_enum!(Pooling, "pooling", Pooling::Avg => "avg", Pooling::Hmm => "hmm", Pooling::GmmMap => "gmm_map");
string_enum!(LossKind, "loss", LossKind::CrossEntropy => "cross_entropy", LossKind::Triplet => "triplet", LossKind::Aauc => "aauc");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub channels: usize,
    pub kernel: usize,
}

/// Shape of a model. Everything needed to rebuild the parameter layout of a
/// checkpoint lives here.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchitectureConfig {
    pub arch: ArchType,
    pub pooling: Pooling,
    pub input_dims: usize,
    /// Frames every utterance is interpolated to.
    pub frames: usize,
    pub front_end: Vec<ConvSpec>,
    /// Dense back-end widths (architecture D only).
    pub back_end: Vec<usize>,
    /// Pooling slots: HMM states or GMM components; 1 for average pooling.
    pub slots: usize,
    /// Softmax classes (training speakers); 0 for architecture D.
    pub n_classes: usize,
    pub tau: f64,
    pub beta: f64,
}

impl ArchitectureConfig {
    pub fn validate(&self) -> Result<()> {
        let mut p = Vec::new();
        match self.arch {
            ArchType::A if self.pooling != Pooling::Avg => {
                p.push("architecture A uses average pooling".to_string())
            }
            ArchType::B if !self.front_end.is_empty() => {
                p.push("architecture B has no front-end".to_string())
            }
            ArchType::B | ArchType::C | ArchType::D if self.pooling == Pooling::Avg => {
                p.push(format!("architecture {} needs alignment pooling", self.arch))
            }
            _ => {}
        }
        if matches!(self.arch, ArchType::A | ArchType::C) && self.front_end.is_empty() {
            p.push(format!("architecture {} needs a front-end", self.arch));
        }
        if self.arch == ArchType::D {
            if self.back_end.len() != 2 {
                p.push("architecture D needs exactly two back-end layers".to_string());
            }
        } else {
            if !self.back_end.is_empty() {
                p.push(format!("architecture {} has no back-end", self.arch));
            }
            if self.n_classes < 2 {
                p.push("a classifier needs at least 2 classes".to_string());
            }
        }
        if self.input_dims == 0 || self.frames < 2 {
            p.push("input dims must be positive and frames at least 2".to_string());
        }
        if self.front_end.iter().any(|c| c.channels == 0 || c.kernel % 2 == 0) {
            p.push("conv layers need positive channels and odd kernels".to_string());
        }
        if self.back_end.contains(&0) {
            p.push("back-end widths must be positive".to_string());
        }
        if self.pooling == Pooling::Avg && self.slots != 1 {
            p.push("average pooling has exactly one slot".to_string());
        }
        if self.slots == 0 {
            p.push("pooling needs at least one slot".to_string());
        }
        if !(self.tau >= 0.0) || !(self.beta > 0.0 && self.beta <= 1.0) {
            p.push(format!("tau {} / beta {} out of range", self.tau, self.beta));
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p.join("; ")))
        }
    }

    /// Channels leaving the front-end (input dims when there is none).
    pub fn feature_dims(&self) -> usize {
        self.front_end.last().map_or(self.input_dims, |c| c.channels)
    }

    /// Length of the pooled supervector.
    pub fn embedding_dims(&self) -> usize {
        self.feature_dims() * self.slots
    }

    /// Length of the vector that is scored.
    pub fn output_dims(&self) -> usize {
        self.back_end.last().copied().unwrap_or_else(|| self.embedding_dims())
    }

    /// Key/value echo stored in checkpoints.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let list = |v: Vec<String>| if v.is_empty() { "none".to_string() } else { v.join(",") };
        vec![
            ("arch".into(), self.arch.to_string()),
            ("pooling".into(), self.pooling.to_string()),
            ("input_dims".into(), self.input_dims.to_string()),
            ("frames".into(), self.frames.to_string()),
            (
                "front_end".into(),
                list(self.front_end.iter().map(|c| format!("{}x{}", c.channels, c.kernel)).collect()),
            ),
            ("back_end".into(), list(self.back_end.iter().map(|w| w.to_string()).collect())),
            ("slots".into(), self.slots.to_string()),
            ("n_classes".into(), self.n_classes.to_string()),
            ("tau".into(), format!("{:?}", self.tau)),
            ("beta".into(), format!("{:?}", self.beta)),
        ]
    }

    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let get = |k: &str| -> Result<&str> {
            pairs
                .iter()
                .find(|(key, _)| key == k)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::Format(format!("architecture echo lacks {k}")))
        };
        let num = |k: &str| -> Result<usize> {
            get(k)?.parse().map_err(|_| Error::Format(format!("bad {k}")))
        };
        let real = |k: &str| -> Result<f64> {
            get(k)?.parse().map_err(|_| Error::Format(format!("bad {k}")))
        };
        let items = |k: &str| -> Result<Vec<&str>> {
            let v = get(k)?;
            Ok(if v == "none" { Vec::new() } else { v.split(',').collect() })
        };
        let front_end = items("front_end")?
            .into_iter()
            .map(|s| {
                let (c, k) = s.split_once('x').ok_or_else(|| Error::Format(format!("bad conv spec {s}")))?;
                Ok(ConvSpec {
                    channels: c.parse().map_err(|_| Error::Format(format!("bad conv spec {s}")))?,
                    kernel: k.parse().map_err(|_| Error::Format(format!("bad conv spec {s}")))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let back_end = items("back_end")?
            .into_iter()
            .map(|s| s.parse().map_err(|_| Error::Format(format!("bad width {s}"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            arch: get("arch")?.parse()?,
            pooling: get("pooling")?.parse()?,
            input_dims: num("input_dims")?,
            frames: num("frames")?,
            front_end,
            back_end,
            slots: num("slots")?,
            n_classes: num("n_classes")?,
            tau: real("tau")?,
            beta: real("beta")?,
        })
    }
}

/// Optimisation settings shared by all training modes.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub loss: LossKind,
    pub alpha: f64,
    pub margin: f64,
    pub max_positive_pairs: Option<usize>,
    pub max_negative_pairs: Option<usize>,
    /// Random Erasing on training inputs (teacher inputs in bdk mode).
    pub erasing: Option<ErasingConfig>,
    /// Softmax temperature of the bdk teacher; 0 gives one-hot targets.
    pub temperature: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            adam: AdamConfig::default(),
            loss: LossKind::CrossEntropy,
            alpha: 10.0,
            margin: 0.5,
            max_positive_pairs: None,
            max_negative_pairs: None,
            erasing: None,
            temperature: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config("batch size must be at least 2".into()));
        }
        if !(self.adam.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::Config(format!("sigmoid slope {} must be positive", self.alpha)));
        }
        if !(self.temperature >= 0.0) {
            return Err(Error::Config("temperature must be non-negative".into()));
        }
        Ok(())
    }
}
