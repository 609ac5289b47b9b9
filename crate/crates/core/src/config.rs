//! Experiment configuration: a line-based `key = value` file with `#`
//! comments. Unknown keys are rejected; command-line overrides are applied
//! on top with [`ExperimentConfig::set`]. Defaults are the desk-scale
//! settings used with the synthetic corpus.

use crate::align::{GmmTrainConfig, HmmTrainConfig};
use crate::corpus::SyntheticSpec;
use crate::error::{Error, Result};
use crate::features::{EraseFill, ErasingConfig};
use crate::metrics::DcfParams;
use crate::network::{ArchType, ArchitectureConfig, ConvSpec, LossKind, Pooling, TrainConfig};
use crate::nn::AdamConfig;
use std::fmt::Write as _;
use std::path::Path;

trait ConfigValue: Sized {
    fn parse_value(s: &str) -> std::result::Result<Self, String>;
    fn show(&self) -> String;
}

macro_rules! plain_value {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> std::result::Result<Self, String> {
                s.parse().map_err(|e| format!("{e}"))
            }
            fn show(&self) -> String {
                self.to_string()
            }
        }
    )*};
}
plain_value!(u64, usize, bool, String, ArchType, Pooling, LossKind);

impl ConfigValue for f64 {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        s.parse().map_err(|e| format!("{e}"))
    }
    fn show(&self) -> String {
        format!("{self:?}")
    }
}

/// Comma-separated list of positive integers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Widths(pub Vec<usize>);

impl ConfigValue for Widths {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        if s == "none" {
            return Ok(Widths(Vec::new()));
        }
        s.split(',')
            .map(|x| x.trim().parse::<usize>().map_err(|e| format!("{x:?}: {e}")))
            .collect::<std::result::Result<_, _>>()
            .map(Widths)
    }
    fn show(&self) -> String {
        if self.0.is_empty() {
            "none".into()
        } else {
            self.0.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(",")
        }
    }
}

macro_rules! experiment_config {
    ($($key:ident : $t:ty = $default:expr;)*) => {
        /// Every tunable of an experiment, one field per configuration key.
        #[derive(Debug, Clone, PartialEq)]
        pub struct ExperimentConfig {
            $(pub $key: $t,)*
        }

        impl Default for ExperimentConfig {
            fn default() -> Self {
                Self { $($key: $default,)* }
            }
        }

        impl ExperimentConfig {
            pub const KEYS: &'static [&'static str] = &[$(stringify!($key)),*];

            /// Sets one key from its textual value.
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    $(stringify!($key) => {
                        self.$key = <$t as ConfigValue>::parse_value(value)
                            .map_err(|e| Error::Config(format!("{key} = {value}: {e}")))?;
                    })*
                    _ => return Err(Error::Config(format!("unknown configuration key {key:?}"))),
                }
                Ok(())
            }

            /// Fully resolved configuration, one `key = value` per line.
            pub fn to_text(&self) -> String {
                let mut out = String::new();
                $(writeln!(out, "{} = {}", stringify!($key), ConfigValue::show(&self.$key)).unwrap();)*
                out
            }
        }
    };
}

experiment_config! {
    seed: u64 = 7;
    // synthetic corpus
    speakers: usize = 20;
    phrases: usize = 5;
    sessions: usize = 9;
    segments: usize = 8;
    dims: usize = 60;
    min_dwell: usize = 4;
    max_dwell: usize = 8;
    noise: f64 = 1.0;
    offset_scale: f64 = 0.1;
    color_scale: f64 = 1.0;
    channel_scale: f64 = 2.0;
    nuisance_dims: usize = 20;
    speaker_rank: usize = 6;
    bkg_speakers: usize = 10;
    dev_speakers: usize = 2;
    enroll_sessions: usize = 3;
    // features and aligners
    frames: usize = 50;
    aligner: Pooling = Pooling::Hmm;
    states: usize = 8;
    components: usize = 8;
    hmm_iterations: usize = 10;
    gmm_iterations: usize = 20;
    kmeans_iterations: usize = 5;
    variance_floor: f64 = 1e-3;
    transition_floor: f64 = 1e-3;
    // network
    arch: ArchType = ArchType::C;
    pooling: Pooling = Pooling::Hmm;
    conv_channels: Widths = Widths(vec![32, 32, 32]);
    conv_kernel: usize = 3;
    back_end: Widths = Widths(vec![128, 64]);
    tau: f64 = 1.0;
    beta: f64 = 0.01;
    // classifier training (A, B, C)
    epochs: usize = 30;
    batch_size: usize = 32;
    learning_rate: f64 = 3e-3;
    // last sessions of each bkg speaker kept out of training
    heldout_sessions: usize = 0;
    // end-to-end training (D)
    loss: LossKind = LossKind::Aauc;
    e2e_epochs: usize = 20;
    e2e_batch_size: usize = 40;
    e2e_learning_rate: f64 = 2e-3;
    alpha: f64 = 10.0;
    margin: f64 = 0.5;
    max_positive_pairs: usize = 5;
    max_negative_pairs: usize = 20;
    erasing_probability: f64 = 0.0;
    erasing_zero_fill: bool = false;
    bdk: bool = false;
    temperature: f64 = 1.0;
    // evaluation
    p_target: f64 = 0.001;
    c_miss: f64 = 1.0;
    c_fa: f64 = 1.0;
}

impl ExperimentConfig {
    /// Applies every `key = value` line of `text`. Blank lines and text after
    /// `#` are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            self.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_text(&crate::binio::read_text(path)?)
    }

    pub fn synthetic_spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            speakers: self.speakers,
            phrases: self.phrases,
            sessions: self.sessions,
            segments: self.segments,
            dims: self.dims,
            min_dwell: self.min_dwell,
            max_dwell: self.max_dwell,
            noise: self.noise,
            offset_scale: self.offset_scale,
            color_scale: self.color_scale,
            channel_scale: self.channel_scale,
            nuisance_dims: self.nuisance_dims,
            speaker_rank: self.speaker_rank,
            bkg_speakers: self.bkg_speakers,
            dev_speakers: self.dev_speakers,
            seed: self.seed,
        }
    }

    pub fn hmm_config(&self) -> HmmTrainConfig {
        HmmTrainConfig {
            states: self.states,
            iterations: self.hmm_iterations,
            variance_floor: self.variance_floor,
            transition_floor: self.transition_floor,
        }
    }

    pub fn gmm_config(&self) -> GmmTrainConfig {
        GmmTrainConfig {
            components: self.components,
            iterations: self.gmm_iterations,
            kmeans_iterations: self.kmeans_iterations,
            variance_floor: self.variance_floor,
            seed: self.seed,
        }
    }

    /// Architecture for `input_dims` features and `n_classes` speakers.
    pub fn architecture(&self, input_dims: usize, n_classes: usize) -> Result<ArchitectureConfig> {
        let front_end = match self.arch {
            ArchType::B => Vec::new(),
            _ => self
                .conv_channels
                .0
                .iter()
                .map(|&channels| ConvSpec { channels, kernel: self.conv_kernel })
                .collect(),
        };
        let pooling = if self.arch == ArchType::A { Pooling::Avg } else { self.pooling };
        let slots = match pooling {
            Pooling::Avg => 1,
            Pooling::Hmm => self.states,
            Pooling::GmmMap => self.components,
        };
        let cfg = ArchitectureConfig {
            arch: self.arch,
            pooling,
            input_dims,
            frames: self.frames,
            front_end,
            back_end: if self.arch == ArchType::D { self.back_end.0.clone() } else { Vec::new() },
            slots,
            n_classes: if self.arch == ArchType::D { 0 } else { n_classes },
            tau: self.tau,
            beta: self.beta,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let cap = |n: usize| (n > 0).then_some(n);
        let erasing = (self.erasing_probability > 0.0).then(|| ErasingConfig {
            probability: self.erasing_probability,
            fill: if self.erasing_zero_fill { EraseFill::Zero } else { EraseFill::Mean },
            ..ErasingConfig::default()
        });
        // `loss` selects the end-to-end objective; classifiers always use cross-entropy
        let (loss, epochs, batch_size, learning_rate) = match (self.arch, self.loss) {
            (ArchType::D, LossKind::CrossEntropy) => {
                return Err(Error::Config("architecture D trains with triplet or aauc loss".into()))
            }
            (ArchType::D, l) => (l, self.e2e_epochs, self.e2e_batch_size, self.e2e_learning_rate),
            _ => (LossKind::CrossEntropy, self.epochs, self.batch_size, self.learning_rate),
        };
        let cfg = TrainConfig {
            epochs,
            batch_size,
            adam: AdamConfig {
                learning_rate,
                ..AdamConfig::default()
            },
            loss,
            alpha: self.alpha,
            margin: self.margin,
            max_positive_pairs: cap(self.max_positive_pairs),
            max_negative_pairs: cap(self.max_negative_pairs),
            erasing,
            temperature: self.temperature,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn dcf(&self) -> Result<DcfParams> {
        let p = DcfParams {
            p_target: self.p_target,
            c_miss: self.c_miss,
            c_fa: self.c_fa,
        };
        p.validate()?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_and_comments() {
        let mut c = ExperimentConfig::default();
        c.apply_text("# header\narch = D  # end-to-end\nloss = aauc\nback_end = 16,8\n\n").unwrap();
        assert_eq!(c.arch, ArchType::D);
        assert_eq!(c.back_end, Widths(vec![16, 8]));
        let again = ExperimentConfig::from_text(&c.to_text()).unwrap();
        assert_eq!(again, c);
        assert_eq!(c.to_text().lines().count(), ExperimentConfig::KEYS.len());
    }

    #[test]
    fn unknown_and_malformed_keys_fail() {
        assert!(ExperimentConfig::from_text("colour = 3").is_err());
        assert!(ExperimentConfig::from_text("epochs = many").is_err());
        assert!(ExperimentConfig::from_text("epochs 3").is_err());
    }

    #[test]
    fn derived_configs_follow_the_architecture() {
        let mut c = ExperimentConfig::default();
        c.arch = ArchType::B;
        let a = c.architecture(60, 10).unwrap();
        assert!(a.front_end.is_empty());
        assert_eq!(a.embedding_dims(), 60 * 8);
        c.arch = ArchType::A;
        assert_eq!(c.architecture(60, 10).unwrap().pooling, Pooling::Avg);
        assert_eq!(c.train_config().unwrap().loss, LossKind::CrossEntropy);
        c.arch = ArchType::D;
        let d = c.train_config().unwrap();
        assert_eq!((d.loss, d.epochs, d.batch_size), (LossKind::Aauc, c.e2e_epochs, c.e2e_batch_size));
        c.loss = LossKind::CrossEntropy;
        assert!(c.train_config().is_err());
    }
}
