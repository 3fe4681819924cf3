//! Confidence-gated automation of RadGraph-style entity annotation.
//!
//! The crate is organized as a pipeline:
//!
//! - [`corpus`]: ingest RadGraph documents, split reports into sentence examples,
//!   and build per-entity datasets with empty-list negatives.
//! - [`extractor`]: pluggable span extractors (replay file, rule baseline, remote
//!   model) and anchoring of structured model output.
//! - [`scoring`]: exact-span matching, entity match score, precision/recall/F1.
//! - [`confidence`]: sigmoid confidences, threshold sweeps with coverage,
//!   isotonic calibration, and expected calibration error.
//! - [`automation`]: merge per-entity predictions into reports, resolve
//!   conflicts by confidence margin, and route reports to acceptance or review.
//! - [`synth`]: retrieval-augmented synthetic sentence generation, rule-based
//!   judging, exact dedup, and label-quality checks.
//! - [`similarity`]: embedding-space coherence and leakage checks between real
//!   and synthetic corpora.
//!
//! Every capability has a runnable program under `examples/`.

pub mod automation;
pub mod confidence;
pub mod corpus;
pub mod extractor;
pub mod fixtures;
pub mod io;
pub mod scoring;
pub mod seed;
pub mod similarity;
pub mod synth;
pub mod text;

pub use corpus::{EntitySpan, EntityType, Report, Sentence, SentenceId, SpanLike};
pub use extractor::{PredictedSpan, SentencePrediction};

