//! Corpus handling: the synthetic speaker x phrase generator, manifest
//! ingestion and validation, and impostor-correct trial lists.

mod manifest;
mod synth;
mod trials;

pub use manifest::{
    boundaries_to_text, ingest, read_boundaries, Boundaries, CorpusManifest, Partition,
    UtteranceRecord,
};
pub use synth::{generate, SyntheticSpec, BOUNDARIES_FILE, MANIFEST_FILE};
pub use trials::{build_trials, enrollment_to_text, model_id, parse_enrollment, EnrollModel, TrialList};
