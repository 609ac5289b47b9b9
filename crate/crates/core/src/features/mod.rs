//! Acoustic front-end: MFCC extraction, regression deltas, time
//! interpolation, Random Erasing, and the binary feature-file format.

mod augment;
mod deltas;
mod file;
mod interpolate;
mod mfcc;

pub use augment::{random_erasing, EraseFill, ErasingConfig};
pub use deltas::{add_deltas, cepstral_mean_normalize, DELTA_WINDOW};
pub use file::{read_feature_file, write_feature_file, FEATURE_MAGIC};
pub use interpolate::interpolate_time;
pub use mfcc::{extract_features, extract_mfcc, mel_filterbank, FeatureConfig, MfccConfig, Waveform};

use crate::nn::Tensor2D;

/// A `dims x frames` matrix of acoustic features for one utterance.
pub type FeatureMatrix = Tensor2D;
