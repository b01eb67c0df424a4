//! On-disk tensors, subject manifests and subject-bundle assembly.
//!
//! A cohort directory holds one sub-directory per subject, each with a
//! `manifest.json`:
//!
//! ```json
//! {
//!   "subject_id": "S001",
//!   "label": 1,
//!   "entries": [
//!     { "modality": "eeg", "feature_kind": "raw_eeg", "recording_index": null,
//!       "tensor_path": "eeg.tdep", "dims": [29, 75000], "sample_rate": 250,
//!       "channel_names": ["Fp1", "..."] },
//!     { "modality": "speech", "feature_kind": "wav", "recording_index": 1,
//!       "tensor_path": "speech/rec01.wav", "dims": [] },
//!     { "modality": "text", "feature_kind": "mpnet", "recording_index": 1,
//!       "tensor_path": "text/rec01.tdep", "dims": [768] }
//!   ]
//! }
//! ```
//!
//! Paths are relative to the manifest's directory. `label` is 1 for MDD and
//! 0 for healthy controls.

mod bundle;
mod manifest;
mod tensor;

pub use bundle::{assemble_bundle, BundleSelection, FeatureMatrix, SubjectBundle};
pub use manifest::{load_cohort, validate_manifest, ManifestEntry, SubjectManifest, MANIFEST_FILE};
pub use tensor::{read_dims, read_tensor, write_tensor, Tdep1Tensor, TensorError, DTYPE_F32LE, MAGIC};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Eeg,
    Speech,
    Text,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Eeg, Modality::Speech, Modality::Text];

    pub fn name(self) -> &'static str {
        match self {
            Modality::Eeg => "eeg",
            Modality::Speech => "speech",
            Modality::Text => "text",
        }
    }

    pub fn display(self) -> &'static str {
        match self {
            Modality::Eeg => "EEG",
            Modality::Speech => "Speech",
            Modality::Text => "Text",
        }
    }
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Kind of data a manifest entry points at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    /// Raw EEG, channels × samples.
    RawEeg,
    /// Handcrafted EEG descriptors, S × 29 × 10 (or flattened S × 290).
    Handcrafted,
    Labram,
    Cbramod,
    /// Interview audio file.
    Wav,
    Mfcc,
    ProsodyMfcc,
    Xlsr,
    Hubert,
    Bert,
    Macbert,
    Xlnet,
    Mpnet,
}

pub const EEG_EMBEDDING_DIM: usize = 200;
pub const TEXT_EMBEDDING_DIM: usize = 768;

impl FeatureKind {
    pub fn modality(self) -> Modality {
        use FeatureKind::*;
        match self {
            RawEeg | Handcrafted | Labram | Cbramod => Modality::Eeg,
            Wav | Mfcc | ProsodyMfcc | Xlsr | Hubert => Modality::Speech,
            Bert | Macbert | Xlnet | Mpnet => Modality::Text,
        }
    }

    /// Feature width per row once loaded into a [`FeatureMatrix`]; `None` for
    /// raw signal kinds.
    pub fn feature_dim(self) -> Option<usize> {
        use FeatureKind::*;
        match self {
            RawEeg | Wav => None,
            Handcrafted => Some(crate::eeg::BRANCH1_CHANNELS * crate::eeg::NUM_DESCRIPTORS),
            Labram | Cbramod => Some(EEG_EMBEDDING_DIM),
            Mfcc => Some(40),
            ProsodyMfcc => Some(46),
            Xlsr => Some(1024),
            Hubert => Some(768),
            Bert | Macbert | Xlnet | Mpnet => Some(TEXT_EMBEDDING_DIM),
        }
    }

    pub fn is_raw(self) -> bool {
        matches!(self, FeatureKind::RawEeg | FeatureKind::Wav)
    }

    pub fn name(self) -> &'static str {
        use FeatureKind::*;
        match self {
            RawEeg => "raw_eeg",
            Handcrafted => "handcrafted",
            Labram => "labram",
            Cbramod => "cbramod",
            Wav => "wav",
            Mfcc => "mfcc",
            ProsodyMfcc => "prosody_mfcc",
            Xlsr => "xlsr",
            Hubert => "hubert",
            Bert => "bert",
            Macbert => "macbert",
            Xlnet => "xlnet",
            Mpnet => "mpnet",
        }
    }

    /// Name as printed in result tables.
    pub fn display(self) -> &'static str {
        use FeatureKind::*;
        match self {
            RawEeg => "Raw EEG",
            Handcrafted => "Handcrafted",
            Labram => "LaBraM",
            Cbramod => "CBraMod",
            Wav => "WAV",
            Mfcc => "MFCC",
            ProsodyMfcc => "Prosody+MFCC",
            Xlsr => "XLSR",
            Hubert => "HuBERT",
            Bert => "BERT",
            Macbert => "MacBERT",
            Xlnet => "XLNet",
            Mpnet => "MPNet",
        }
    }
}
