//! Architectures A to D: convolutional front-end, average or alignment
//! pooling, and a softmax classifier or dense back-end, with their training
//! loops, checkpoints and embedding files.
//!
//! Gradients are computed per utterance in parallel and summed in batch
//! order, so a run is bit-reproducible for a given seed regardless of the
//! thread count.

mod arch;
mod checkpoint;
mod data;
mod embed;
mod model;
mod train;

pub use arch::{ArchType, ArchitectureConfig, ConvSpec, LossKind, Pooling, TrainConfig};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC,
};
pub use data::{load_partition, AlignerSet, GmmAligner, PhraseAlignment, Utterance};
pub use embed::{
    decode_embeddings, encode_embeddings, enroll, evaluate, read_embeddings, score_trial,
    score_trials, write_embeddings, Embedding, EMBEDDING_MAGIC,
};
pub use model::{Forward, Gradients, Model};
pub use train::{
    class_index, classifier_loss, init_running_means, pair_batch_loss, phrase_batches, teacher_targets,
    train_bdk, train_classifier, train_end_to_end, BatchStats, TrainReport,
};
