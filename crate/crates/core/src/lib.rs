//! Phrase-preserving supervector embeddings for text-dependent speaker
//! verification.
//!
//! Utterances are turned into fixed-size feature matrices, passed through an
//! optional 1-D convolutional front-end, and pooled into a supervector with a
//! per-phrase alignment: hard Viterbi alignments from a left-to-right HMM or
//! soft GMM posteriors with MAP shrinkage towards a running mean. Networks are
//! trained with cross-entropy, triplet loss, or a sigmoid relaxation of the
//! area under the ROC curve, and evaluated with EER, minDCF, AUC and DET
//! curves.

pub mod align;
mod binio;
pub mod config;
pub mod corpus;
pub mod error;
pub mod features;
pub mod gradcheck;
pub mod losses;
pub mod metrics;
pub mod network;
pub mod nn;
pub mod rng;

pub use binio::write_atomic;
pub use error::{Error, Result};
