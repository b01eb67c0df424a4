//! Trimodal (EEG, speech, text) depression-detection pipeline.
//!
//! The crate covers every stage between raw recordings and a fused
//! subject-level decision:
//!
//! ```text
//! raw EEG (TDEP1) ──► dsp ──► eeg::preprocess_branch1 ──► eeg::handcrafted_features ─┐
//! interview WAVs  ──► dsp ──► speech::preprocess_speech ──► speech::mfcc / prosody ───┤
//! text embeddings (TDEP1, ingested) ───────────────────────────────────────────────────┤
//!                                                                                     ▼
//!                    store::assemble_bundle ──► nn::train / nn::Model::predict (per fold)
//!                                                                                     │
//!                 eval::stratified_subject_kfold ◄── one plan per run ────────────────┤
//!                                                                                     ▼
//!                                     fusion (weighted / soft / Bayesian / majority) ──► eval::report
//! ```
//!
//! [`experiment::run`] wires the whole graph from an [`experiment::ExperimentConfig`];
//! [`synth`] produces cohorts in the on-disk layout the real-data path reads.

pub mod dsp;
pub mod eeg;
mod error;
pub mod eval;
pub mod experiment;
pub mod fusion;
pub mod nn;
pub mod speech;
pub mod store;
pub mod synth;

pub use dsp::{SegmentTensor, SignalBuffer, WindowSpec};
pub use eeg::{EegBranch, EegPatchTensor, EegSegmentTensor, HandcraftedEegFeatures};
pub use error::{Error, ErrorCategory, Result};
pub use eval::{FoldPlan, MetricsReport};
pub use fusion::{FusionDecision, FusionStrategy, FusionWeights};
pub use nn::{EncoderConfig, EncoderKind, Posterior, TrainConfig};
pub use store::{FeatureKind, FeatureMatrix, Modality, SubjectBundle, SubjectManifest, Tdep1Tensor};

/// Number of interview recordings per subject.
pub const RECORDINGS_PER_SUBJECT: usize = 29;
