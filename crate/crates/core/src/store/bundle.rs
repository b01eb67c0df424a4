use serde::{Deserialize, Serialize};

use super::manifest::ensure_valid;
use super::{read_tensor, FeatureKind, Modality, SubjectManifest};
use crate::{Error, Result};

/// Fixed-width feature rows with their kind tag.
///
/// `groups` partitions the rows into consecutive runs, one per source
/// recording, in recording order (a single group for subject-level data).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    kind: FeatureKind,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    groups: Vec<usize>,
}

impl FeatureMatrix {
    pub fn new(kind: FeatureKind, rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        let groups = if rows > 0 { vec![rows] } else { Vec::new() };
        Self::with_groups(kind, rows, cols, data, groups)
    }

    pub fn with_groups(kind: FeatureKind, rows: usize, cols: usize, data: Vec<f64>, groups: Vec<usize>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!("{} values for a {rows}×{cols} matrix", data.len())));
        }
        if groups.iter().sum::<usize>() != rows || groups.contains(&0) {
            return Err(Error::Shape(format!("row groups {groups:?} do not partition {rows} rows")));
        }
        if let Some(d) = kind.feature_dim() {
            if d != cols {
                return Err(Error::Shape(format!("{} features are {d} wide, got {cols}", kind.name())));
            }
        }
        Ok(Self { kind, rows, cols, data, groups })
    }

    /// Row-concatenation; each non-empty part contributes its own groups.
    pub fn concat<'a>(kind: FeatureKind, cols: usize, parts: impl IntoIterator<Item = &'a FeatureMatrix>) -> Result<Self> {
        let mut data = Vec::new();
        let mut groups = Vec::new();
        let mut rows = 0;
        for p in parts {
            if p.cols != cols {
                return Err(Error::Shape(format!("cannot stack {} columns onto {cols}", p.cols)));
            }
            data.extend_from_slice(&p.data);
            groups.extend_from_slice(&p.groups);
            rows += p.rows;
        }
        Self::with_groups(kind, rows, cols, data, groups)
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn groups(&self) -> &[usize] {
        &self.groups
    }
}

/// Which stored feature kind to load per modality; `None` skips it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleSelection {
    pub eeg: Option<FeatureKind>,
    pub speech: Option<FeatureKind>,
    pub text: Option<FeatureKind>,
}

impl BundleSelection {
    pub fn get(&self, m: Modality) -> Option<FeatureKind> {
        match m {
            Modality::Eeg => self.eeg,
            Modality::Speech => self.speech,
            Modality::Text => self.text,
        }
    }

    pub fn set(&mut self, m: Modality, kind: Option<FeatureKind>) {
        match m {
            Modality::Eeg => self.eeg = kind,
            Modality::Speech => self.speech = kind,
            Modality::Text => self.text = kind,
        }
    }
}

/// One subject's label and subject-level feature matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectBundle {
    pub subject_id: String,
    pub label: u8,
    pub eeg: Option<FeatureMatrix>,
    pub speech: Option<FeatureMatrix>,
    pub text: Option<FeatureMatrix>,
}

impl SubjectBundle {
    pub fn modality(&self, m: Modality) -> Option<&FeatureMatrix> {
        match m {
            Modality::Eeg => self.eeg.as_ref(),
            Modality::Speech => self.speech.as_ref(),
            Modality::Text => self.text.as_ref(),
        }
    }

    pub fn has(&self, m: Modality) -> bool {
        self.modality(m).is_some()
    }
}

fn load_matrix(m: &SubjectManifest, kind: FeatureKind) -> Result<Option<FeatureMatrix>> {
    let entries = m.entries_of(kind);
    if entries.is_empty() {
        return Ok(None);
    }
    let cols = kind.feature_dim().expect("raw kinds rejected by caller");
    let mut parts = Vec::with_capacity(entries.len());
    for e in entries {
        let t = read_tensor(m.resolve(e))?;
        let rows = match t.dims() {
            [n] if *n == cols => 1,
            [r, rest @ ..] if rest.iter().product::<usize>() == cols => *r,
            dims => return Err(Error::Shape(format!("{} tensor with dims {dims:?}", kind.name()))),
        };
        parts.push(FeatureMatrix::new(kind, rows, cols, t.to_f64())?);
    }
    let non_empty: Vec<_> = parts.iter().filter(|p| p.rows() > 0).collect();
    if non_empty.is_empty() {
        return Ok(None);
    }
    // text embeddings form one subject-level sequence (one row per recording)
    let merged = FeatureMatrix::concat(kind, cols, non_empty)?;
    if kind.modality() == Modality::Text {
        let rows = merged.rows();
        return Ok(Some(FeatureMatrix::new(kind, rows, cols, merged.data)?));
    }
    Ok(Some(merged))
}

/// Loads the selected feature kinds of a validated manifest. Speech and text
/// rows follow recording order; recordings absent from the manifest are
/// simply missing. Fails without a partial bundle on any violation.
pub fn assemble_bundle(m: &SubjectManifest, selection: &BundleSelection) -> Result<SubjectBundle> {
    ensure_valid(m)?;
    let mut bundle = SubjectBundle { subject_id: m.subject_id.clone(), label: m.label, eeg: None, speech: None, text: None };
    for modality in Modality::ALL {
        let Some(kind) = selection.get(modality) else { continue };
        if kind.modality() != modality || kind.is_raw() {
            return Err(Error::InvalidArgument(format!(
                "{} cannot be loaded as {modality} features",
                kind.name()
            )));
        }
        let matrix = load_matrix(m, kind)?;
        match modality {
            Modality::Eeg => bundle.eeg = matrix,
            Modality::Speech => bundle.speech = matrix,
            Modality::Text => bundle.text = matrix,
        }
    }
    if Modality::ALL.iter().all(|&md| !bundle.has(md)) {
        return Err(Error::Manifest(vec![format!("{}: no selected modality present", m.subject_id)]));
    }
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{write_tensor, ManifestEntry, Tdep1Tensor};
    use std::path::Path;

    fn put(m: &mut SubjectManifest, kind: FeatureKind, rec: Option<usize>, dims: Vec<usize>, fill: f32) {
        let name = format!("{}_{}.tdep", kind.name(), rec.unwrap_or(0));
        let n = dims.iter().product();
        let data = (0..n).map(|i| fill + i as f32).collect();
        write_tensor(&Tdep1Tensor::new(dims.clone(), data).unwrap(), Path::new(&m.root).join(&name)).unwrap();
        m.entries.push(ManifestEntry {
            modality: kind.modality(),
            feature_kind: kind,
            recording_index: rec,
            tensor_path: name,
            dims,
            sample_rate: None,
            channel_names: None,
        });
    }

    #[test]
    fn text_stacks_to_subject_matrix() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = SubjectManifest::new("S1", 1, dir.path());
        for r in (1..=29).rev() {
            put(&mut m, FeatureKind::Bert, Some(r), vec![768], r as f32 * 1000.0);
        }
        let b = assemble_bundle(&m, &BundleSelection { text: Some(FeatureKind::Bert), ..Default::default() }).unwrap();
        let t = b.text.unwrap();
        assert_eq!((t.rows(), t.cols()), (29, 768));
        // manifest order was reversed; rows follow recording index
        assert_eq!(t.row(0)[0], 1000.0);
        assert_eq!(t.row(28)[0], 29_000.0);
    }

    #[test]
    fn speech_concatenates_with_groups() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = SubjectManifest::new("S1", 0, dir.path());
        put(&mut m, FeatureKind::Mfcc, Some(4), vec![4, 40], 100.0);
        put(&mut m, FeatureKind::Mfcc, Some(2), vec![3, 40], 0.0);
        let b = assemble_bundle(&m, &BundleSelection { speech: Some(FeatureKind::Mfcc), ..Default::default() }).unwrap();
        let s = b.speech.unwrap();
        assert_eq!((s.rows(), s.cols()), (7, 40));
        assert_eq!(s.groups(), &[3, 4]);
        assert_eq!(s.row(3)[0], 100.0);
        assert!(b.eeg.is_none() && b.text.is_none());
    }

    #[test]
    fn handcrafted_is_flattened() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = SubjectManifest::new("S1", 0, dir.path());
        put(&mut m, FeatureKind::Handcrafted, None, vec![2, 29, 10], 0.0);
        let b = assemble_bundle(&m, &BundleSelection { eeg: Some(FeatureKind::Handcrafted), ..Default::default() }).unwrap();
        let e = b.eeg.unwrap();
        assert_eq!((e.rows(), e.cols()), (2, 290));
        assert_eq!(e.row(1)[0], 290.0);
    }

    #[test]
    fn invalid_manifest_yields_no_bundle() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = SubjectManifest::new("S1", 0, dir.path());
        put(&mut m, FeatureKind::Mfcc, Some(1), vec![3, 40], 0.0);
        m.entries[0].dims = vec![3, 41];
        let err = assemble_bundle(&m, &BundleSelection { speech: Some(FeatureKind::Mfcc), ..Default::default() });
        assert!(matches!(err, Err(Error::Manifest(_))));
    }

    #[test]
    fn corrupted_tensor_yields_no_bundle() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = SubjectManifest::new("S1", 0, dir.path());
        put(&mut m, FeatureKind::Mfcc, Some(1), vec![3, 40], 0.0);
        let path = dir.path().join(&m.entries[0].tensor_path);
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(assemble_bundle(&m, &BundleSelection { speech: Some(FeatureKind::Mfcc), ..Default::default() }).is_err());
    }

    #[test]
    fn raw_kinds_not_loadable() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = SubjectManifest::new("S1", 0, dir.path());
        put(&mut m, FeatureKind::Mfcc, Some(1), vec![3, 40], 0.0);
        let sel = BundleSelection { speech: Some(FeatureKind::Wav), ..Default::default() };
        assert!(assemble_bundle(&m, &sel).is_err());
    }

    #[test]
    fn matrix_rejects_wrong_width() {
        assert!(FeatureMatrix::new(FeatureKind::Mfcc, 1, 41, vec![0.0; 41]).is_err());
        assert!(FeatureMatrix::with_groups(FeatureKind::Mfcc, 2, 40, vec![0.0; 80], vec![1, 0, 1]).is_err());
    }
}
