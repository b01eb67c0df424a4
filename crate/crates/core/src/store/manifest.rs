use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_dims, FeatureKind, Modality, TEXT_EMBEDDING_DIM};
use crate::{eeg, Error, Result, RECORDINGS_PER_SUBJECT};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub modality: Modality,
    pub feature_kind: FeatureKind,
    /// 1-based interview item for speech and text; absent for EEG.
    pub recording_index: Option<usize>,
    pub tensor_path: String,
    pub dims: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_rate: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel_names: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectManifest {
    pub subject_id: String,
    pub label: u8,
    pub entries: Vec<ManifestEntry>,
    /// Directory that `tensor_path`s are resolved against.
    #[serde(skip)]
    pub root: PathBuf,
}

impl SubjectManifest {
    pub fn new(subject_id: impl Into<String>, label: u8, root: impl Into<PathBuf>) -> Self {
        Self { subject_id: subject_id.into(), label, entries: Vec::new(), root: root.into() }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut m: SubjectManifest = serde_json::from_slice(&fs::read(path)?)?;
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    /// Writes `manifest.json` into `self.root`.
    pub fn save(&self) -> Result<PathBuf> {
        fs::create_dir_all(&self.root)?;
        let path = self.root.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text)?;
        Ok(path)
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.tensor_path)
    }

    /// Entries of one kind, sorted by recording index.
    pub fn entries_of(&self, kind: FeatureKind) -> Vec<&ManifestEntry> {
        let mut v: Vec<_> = self.entries.iter().filter(|e| e.feature_kind == kind).collect();
        v.sort_by_key(|e| e.recording_index);
        v
    }

    pub fn has_kind(&self, kind: FeatureKind) -> bool {
        self.entries.iter().any(|e| e.feature_kind == kind)
    }
}

/// Every manifest under `root/*/manifest.json`, ordered by directory name.
pub fn load_cohort(root: impl AsRef<Path>) -> Result<Vec<SubjectManifest>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root.as_ref())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(MANIFEST_FILE).is_file())
        .collect();
    dirs.sort();
    dirs.iter().map(|d| SubjectManifest::load(d.join(MANIFEST_FILE))).collect()
}

/// Dims each tensor-backed kind must have.
fn dims_violation(e: &ManifestEntry) -> Option<String> {
    use FeatureKind::*;
    let d = &e.dims;
    let ok = match e.feature_kind {
        RawEeg => d.len() == 2 && d[0] >= 1,
        Wav => true,
        Handcrafted => {
            (d.len() == 3 && d[1] == eeg::BRANCH1_CHANNELS && d[2] == eeg::NUM_DESCRIPTORS)
                || (d.len() == 2 && d[1] == eeg::BRANCH1_CHANNELS * eeg::NUM_DESCRIPTORS)
        }
        Bert | Macbert | Xlnet | Mpnet => d == &[TEXT_EMBEDDING_DIM] || d == &[1, TEXT_EMBEDDING_DIM],
        kind => d.len() == 2 && Some(d[1]) == kind.feature_dim(),
    };
    (!ok).then(|| format!("{} entry `{}` has dims {:?}", e.feature_kind.name(), e.tensor_path, d))
}

/// All contract violations of a manifest; empty when it is usable.
pub fn validate_manifest(m: &SubjectManifest) -> Vec<String> {
    let mut out = Vec::new();
    if m.label > 1 {
        out.push(format!("label {} is not 0 (HC) or 1 (MDD)", m.label));
    }
    if m.entries.is_empty() {
        out.push("manifest has no entries".into());
    }
    let mut seen = BTreeSet::new();
    for e in &m.entries {
        let what = format!("{} entry `{}`", e.feature_kind.name(), e.tensor_path);
        if e.feature_kind.modality() != e.modality {
            out.push(format!("{what} is filed under modality {}", e.modality));
        }
        match (e.modality, e.recording_index) {
            (Modality::Eeg, Some(r)) => out.push(format!("{what}: EEG entries are subject-level, got recording {r}")),
            (Modality::Speech | Modality::Text, None) => out.push(format!("{what}: missing recording index")),
            (Modality::Speech | Modality::Text, Some(r)) if !(1..=RECORDINGS_PER_SUBJECT).contains(&r) => {
                out.push(format!("{what}: recording index {r} outside 1..={RECORDINGS_PER_SUBJECT}"))
            }
            _ => {}
        }
        if !seen.insert((e.feature_kind, e.recording_index)) {
            out.push(format!("{what}: duplicate entry"));
        }
        if let Some(v) = dims_violation(e) {
            out.push(v);
        }
        if e.feature_kind == FeatureKind::RawEeg {
            match e.sample_rate {
                None | Some(0) => out.push(format!("{what}: raw EEG needs a positive sample_rate")),
                _ => {}
            }
            if let Some(names) = &e.channel_names {
                if e.dims.first() != Some(&names.len()) {
                    out.push(format!("{what}: {} channel names for dims {:?}", names.len(), e.dims));
                }
            }
        }
        let path = m.resolve(e);
        if !path.is_file() {
            out.push(format!("{what}: file {} not found", path.display()));
            continue;
        }
        if e.feature_kind == FeatureKind::Wav {
            if let Err(err) = hound::WavReader::open(&path) {
                out.push(format!("{what}: unreadable WAV ({err})"));
            }
            continue;
        }
        match read_dims(&path) {
            Ok(d) if d != e.dims => out.push(format!("{what}: file dims {d:?} differ from manifest {:?}", e.dims)),
            Ok(_) => {}
            Err(err) => out.push(format!("{what}: {err}")),
        }
    }
    out
}

pub(crate) fn ensure_valid(m: &SubjectManifest) -> Result<()> {
    let v = validate_manifest(m);
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::Manifest(v.into_iter().map(|s| format!("{}: {s}", m.subject_id)).collect()))
    }
}
