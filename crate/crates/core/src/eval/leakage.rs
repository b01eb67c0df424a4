//! Segment-level versus subject-level splitting with a 1-nearest-neighbour
//! classifier. Segments of one subject resemble each other more than they
//! resemble other subjects, so letting them straddle a split inflates scores.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{aggregate, leakage_check, stratified_subject_kfold, FoldMetrics, FoldPlan, MetricsReport};
use crate::store::FeatureMatrix;
use crate::{Error, Result};

/// Flat collection of segment rows tagged with their subject and label.
#[derive(Debug, Clone, Default)]
pub struct SegmentSet {
    ids: Vec<String>,
    owner: Vec<String>,
    labels: Vec<u8>,
    rows: Vec<Vec<f64>>,
}

impl SegmentSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_subject(&mut self, subject_id: &str, label: u8, features: &FeatureMatrix) {
        for r in 0..features.rows() {
            self.ids.push(format!("{subject_id}#{r:04}"));
            self.owner.push(subject_id.to_string());
            self.labels.push(label);
            self.rows.push(features.row(r).to_vec());
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn subjects(&self) -> Vec<(String, u8)> {
        let mut seen = BTreeMap::new();
        for (o, l) in self.owner.iter().zip(&self.labels) {
            seen.entry(o.clone()).or_insert(*l);
        }
        seen.into_iter().collect()
    }

    fn owner_map(&self) -> BTreeMap<String, String> {
        self.ids.iter().cloned().zip(self.owner.iter().cloned()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageDemo {
    pub segment_level: MetricsReport,
    pub subject_level: MetricsReport,
    /// Subjects split across folds by the segment-level plan.
    pub leaked_subjects: usize,
}

fn score_plan(set: &SegmentSet, fold_of_segment: &[usize], k: usize) -> Result<MetricsReport> {
    let mut per_fold = Vec::with_capacity(k);
    let dim = set.rows.first().map_or(0, Vec::len);
    for fold in 0..k {
        let train: Vec<usize> = (0..set.len()).filter(|&i| fold_of_segment[i] != fold).collect();
        let test: Vec<usize> = (0..set.len()).filter(|&i| fold_of_segment[i] == fold).collect();
        if train.is_empty() || test.is_empty() {
            return Err(Error::InvalidArgument(format!("fold {fold} has an empty side")));
        }
        let mut mean = vec![0.0; dim];
        let mut sq = vec![0.0; dim];
        for &i in &train {
            for (c, v) in set.rows[i].iter().enumerate() {
                mean[c] += v;
                sq[c] += v * v;
            }
        }
        let n = train.len() as f64;
        let scale: Vec<f64> = mean
            .iter_mut()
            .zip(&sq)
            .map(|(m, s)| {
                *m /= n;
                let sd = (s / n - *m * *m).max(0.0).sqrt();
                if sd > 1e-12 {
                    1.0 / sd
                } else {
                    0.0
                }
            })
            .collect();
        let z = |i: usize| -> Vec<f64> { set.rows[i].iter().zip(&mean).zip(&scale).map(|((v, m), s)| (v - m) * s).collect() };
        let train_z: Vec<Vec<f64>> = train.iter().map(|&i| z(i)).collect();
        let mut preds = Vec::with_capacity(test.len());
        let mut labels = Vec::with_capacity(test.len());
        for &i in &test {
            let q = z(i);
            let mut best = (f64::INFINITY, 0);
            for (j, t) in train_z.iter().enumerate() {
                let d: f64 = q.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best.0 {
                    best = (d, j);
                }
            }
            preds.push(set.labels[train[best.1]]);
            labels.push(set.labels[i]);
        }
        per_fold.push(FoldMetrics::score(&preds, &labels)?);
    }
    aggregate(&per_fold)
}

/// Segment-level 1-NN scores under a segment-level split and under a
/// subject-level split of the same data.
pub fn nearest_neighbour_cv(set: &SegmentSet, k: usize, seed: u64) -> Result<LeakageDemo> {
    let segments: Vec<(String, u8)> = set.ids.iter().cloned().zip(set.labels.iter().copied()).collect();
    let seg_plan = stratified_subject_kfold(&segments, k, seed)?;
    let subj_plan = stratified_subject_kfold(&set.subjects(), k, seed)?;
    let index = |plan: &FoldPlan, keys: &[String]| -> Vec<usize> {
        let lookup: BTreeMap<&str, usize> =
            plan.folds.iter().enumerate().flat_map(|(f, ids)| ids.iter().map(move |id| (id.as_str(), f))).collect();
        keys.iter().map(|id| lookup[id.as_str()]).collect()
    };
    let segment_level = score_plan(set, &index(&seg_plan, &set.ids), k)?;
    let subject_level = score_plan(set, &index(&subj_plan, &set.owner), k)?;
    let leaked_subjects = leakage_check(&seg_plan, &set.owner_map()).offending.len();
    Ok(LeakageDemo { segment_level, subject_level, leaked_subjects })
}
