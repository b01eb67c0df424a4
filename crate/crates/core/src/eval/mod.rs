//! Subject-level cross-validation, leakage guards, metrics and report tables.

mod leakage;
mod report;

pub use leakage::{nearest_neighbour_cv, LeakageDemo, SegmentSet};
pub use report::{render_table, ReportRow, ResultsReport};

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// K disjoint folds of unit ids (subjects, or segments for the leaky
/// baseline). Serializes as the split file `{seed, k, folds}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub seed: u64,
    pub k: usize,
    pub folds: Vec<Vec<String>>,
}

impl FoldPlan {
    pub fn test_ids(&self, fold: usize) -> &[String] {
        &self.folds[fold]
    }

    pub fn train_ids(&self, fold: usize) -> Vec<&String> {
        self.folds.iter().enumerate().filter(|(i, _)| *i != fold).flat_map(|(_, f)| f).collect()
    }

    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.folds.iter().position(|f| f.iter().any(|s| s == id))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let plan: FoldPlan = serde_json::from_slice(&fs::read(path)?)?;
        if plan.folds.len() != plan.k {
            return Err(Error::InvalidArgument(format!("split file lists {} folds for k = {}", plan.folds.len(), plan.k)));
        }
        Ok(plan)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    /// Broken guarantees of this plan against the labelled units.
    pub fn violations(&self, units: &[(String, u8)]) -> Vec<String> {
        let mut out = Vec::new();
        if self.folds.len() != self.k {
            out.push(format!("{} folds for k = {}", self.folds.len(), self.k));
        }
        let mut seen = BTreeMap::new();
        for (i, f) in self.folds.iter().enumerate() {
            for id in f {
                if let Some(prev) = seen.insert(id.as_str(), i) {
                    out.push(format!("{id} appears in folds {prev} and {i}"));
                }
            }
        }
        let labels: BTreeMap<&str, u8> = units.iter().map(|(id, l)| (id.as_str(), *l)).collect();
        for id in labels.keys() {
            if !seen.contains_key(id) {
                out.push(format!("{id} is in no fold"));
            }
        }
        for id in seen.keys() {
            if !labels.contains_key(id) {
                out.push(format!("{id} is not a known unit"));
            }
        }
        let spread = |counts: Vec<usize>| counts.iter().max().unwrap_or(&0) - counts.iter().min().unwrap_or(&0);
        let sizes: Vec<usize> = self.folds.iter().map(Vec::len).collect();
        if spread(sizes.clone()) > 1 {
            out.push(format!("fold sizes {sizes:?} differ by more than one"));
        }
        for class in [0u8, 1] {
            let counts: Vec<usize> = self
                .folds
                .iter()
                .map(|f| f.iter().filter(|id| labels.get(id.as_str()) == Some(&class)).count())
                .collect();
            if spread(counts.clone()) > 1 {
                out.push(format!("class {class} counts {counts:?} differ by more than one"));
            }
        }
        out
    }
}

/// Stratified K-fold over labelled units.
///
/// Each class is sorted by id, shuffled with `seed`, then dealt round-robin;
/// the second class continues where the first stopped so fold sizes also
/// stay within one of each other. Ids inside a fold are sorted.
pub fn stratified_subject_kfold(units: &[(String, u8)], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k = {k}; need at least 2 folds")));
    }
    let unique: BTreeSet<&str> = units.iter().map(|(id, _)| id.as_str()).collect();
    if unique.len() != units.len() {
        return Err(Error::InvalidArgument("duplicate subject ids".into()));
    }
    if let Some((id, l)) = units.iter().find(|(_, l)| *l > 1) {
        return Err(Error::InvalidArgument(format!("{id} has label {l}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for class in [0u8, 1] {
        let mut ids: Vec<&String> = units.iter().filter(|(_, l)| *l == class).map(|(id, _)| id).collect();
        if ids.len() < k {
            return Err(Error::InvalidArgument(format!(
                "class {class} has {} subjects, fewer than k = {k}",
                ids.len()
            )));
        }
        ids.sort();
        ids.shuffle(&mut rng);
        for id in ids {
            folds[next].push(id.clone());
            next = (next + 1) % k;
        }
    }
    folds.iter_mut().for_each(|f| f.sort());
    Ok(FoldPlan { seed, k, folds })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub passed: bool,
    /// Subjects whose data sits on both sides of some fold.
    pub offending: Vec<String>,
}

/// Checks that no subject contributes to both the train and test side of
/// any fold. Plan entries are resolved to subjects through `owner`; entries
/// without an owner are taken to be subject ids themselves.
pub fn leakage_check(plan: &FoldPlan, owner: &BTreeMap<String, String>) -> LeakageReport {
    let resolve = |id: &String| owner.get(id).unwrap_or(id).clone();
    let per_fold: Vec<BTreeSet<String>> = plan.folds.iter().map(|f| f.iter().map(resolve).collect()).collect();
    let mut offending = BTreeSet::new();
    for (i, test) in per_fold.iter().enumerate() {
        for (j, other) in per_fold.iter().enumerate() {
            if i != j {
                offending.extend(test.intersection(other).cloned());
            }
        }
    }
    LeakageReport { passed: offending.is_empty(), offending: offending.into_iter().collect() }
}

fn check_pairs(preds: &[u8], labels: &[u8]) -> Result<()> {
    if preds.len() != labels.len() {
        return Err(Error::InvalidArgument(format!("{} predictions for {} labels", preds.len(), labels.len())));
    }
    if preds.is_empty() {
        return Err(Error::InvalidArgument("no predictions to score".into()));
    }
    Ok(())
}

/// F1 of the positive (MDD) class, `2TP / (2TP + FP + FN)`; 0 when nothing
/// is positive on either side.
pub fn f1_score(preds: &[u8], labels: &[u8]) -> Result<f64> {
    check_pairs(preds, labels)?;
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&p, &l) in preds.iter().zip(labels) {
        match (p == 1, l == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    let denom = 2 * tp + fp + fn_;
    Ok(if denom == 0 { 0.0 } else { 2.0 * tp as f64 / denom as f64 })
}

pub fn accuracy(preds: &[u8], labels: &[u8]) -> Result<f64> {
    check_pairs(preds, labels)?;
    Ok(preds.iter().zip(labels).filter(|(p, l)| p == l).count() as f64 / preds.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub f1: f64,
    pub accuracy: f64,
}

impl FoldMetrics {
    pub fn score(preds: &[u8], labels: &[u8]) -> Result<Self> {
        Ok(Self { f1: f1_score(preds, labels)?, accuracy: accuracy(preds, labels)? })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_fold: Vec<FoldMetrics>,
    pub mean_f1: f64,
    pub std_f1: f64,
    pub mean_acc: f64,
    pub std_acc: f64,
}

/// Mean and sample (n − 1) standard deviation; zero spread for one value.
fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn aggregate(per_fold: &[FoldMetrics]) -> Result<MetricsReport> {
    if per_fold.is_empty() {
        return Err(Error::InvalidArgument("no folds to aggregate".into()));
    }
    let (mean_f1, std_f1) = mean_std(&per_fold.iter().map(|m| m.f1).collect::<Vec<_>>());
    let (mean_acc, std_acc) = mean_std(&per_fold.iter().map(|m| m.accuracy).collect::<Vec<_>>());
    Ok(MetricsReport { per_fold: per_fold.to_vec(), mean_f1, std_f1, mean_acc, std_acc })
}

/// `"0.850 ± 0.071"`.
pub fn format_mean_std(mean: f64, std: f64) -> String {
    format!("{mean:.3} ± {std:.3}")
}

impl MetricsReport {
    pub fn f1_display(&self) -> String {
        format_mean_std(self.mean_f1, self.std_f1)
    }

    pub fn accuracy_display(&self) -> String {
        format_mean_std(self.mean_acc, self.std_acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cohort(n_pos: usize, n_neg: usize) -> Vec<(String, u8)> {
        (0..n_pos + n_neg).map(|i| (format!("S{i:03}"), u8::from(i < n_pos))).collect()
    }

    #[test]
    fn thirty_eight_subjects_into_five() {
        let plan = stratified_subject_kfold(&cohort(19, 19), 5, 42).unwrap();
        let mut sizes: Vec<usize> = plan.folds.iter().map(Vec::len).collect();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        assert_eq!(sizes, vec![8, 8, 8, 7, 7]);
        assert!(plan.violations(&cohort(19, 19)).is_empty());
    }

    #[test]
    fn perfectly_stratified_ten() {
        let units = cohort(5, 5);
        let plan = stratified_subject_kfold(&units, 5, 3).unwrap();
        for f in &plan.folds {
            let pos = f.iter().filter(|id| units.iter().any(|(u, l)| u == *id && *l == 1)).count();
            assert_eq!((f.len(), pos), (2, 1));
        }
    }

    #[test]
    fn split_is_seed_deterministic() {
        let units = cohort(12, 9);
        assert_eq!(stratified_subject_kfold(&units, 5, 9).unwrap(), stratified_subject_kfold(&units, 5, 9).unwrap());
        let mut reversed = units.clone();
        reversed.reverse();
        assert_eq!(stratified_subject_kfold(&units, 5, 9).unwrap(), stratified_subject_kfold(&reversed, 5, 9).unwrap());
    }

    #[test]
    fn small_class_rejected() {
        assert!(stratified_subject_kfold(&cohort(4, 10), 5, 0).is_err());
        assert!(stratified_subject_kfold(&cohort(4, 10), 1, 0).is_err());
    }

    #[test]
    fn split_file_round_trip() {
        let plan = stratified_subject_kfold(&cohort(6, 6), 3, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("split.json");
        plan.save(&path).unwrap();
        let first = fs::read(&path).unwrap();
        assert_eq!(FoldPlan::load(&path).unwrap(), plan);
        plan.save(&path).unwrap();
        assert_eq!(fs::read(&path).unwrap(), first);
    }

    #[test]
    fn leakage_detection() {
        let units = cohort(5, 5);
        let plan = stratified_subject_kfold(&units, 5, 1).unwrap();
        let mut owner = BTreeMap::new();
        for (id, _) in &units {
            for s in 0..3 {
                owner.insert(format!("{id}/seg{s}"), id.clone());
            }
        }
        assert!(leakage_check(&plan, &owner).passed);
        assert!(leakage_check(&plan, &BTreeMap::new()).passed);

        // segment-level plan that separates one subject's segments
        let mut seg_plan = FoldPlan { seed: 0, k: 2, folds: vec![Vec::new(), Vec::new()] };
        for (seg, subj) in &owner {
            let fold = if subj == "S003" { usize::from(seg.ends_with('0')) } else { 0 };
            seg_plan.folds[fold].push(seg.clone());
        }
        let r = leakage_check(&seg_plan, &owner);
        assert!(!r.passed);
        assert_eq!(r.offending, vec!["S003".to_string()]);
    }

    #[test]
    fn f1_examples() {
        assert_eq!(f1_score(&[1, 0, 1], &[1, 0, 1]).unwrap(), 1.0);
        let f = f1_score(&[1, 1, 1, 0, 0], &[1, 1, 0, 1, 0]).unwrap();
        assert!((f - 4.0 / 6.0).abs() < 1e-12);
        assert_eq!(f1_score(&[0, 0], &[0, 0]).unwrap(), 0.0);
        assert!(f1_score(&[], &[]).is_err());
        assert!(f1_score(&[1], &[1, 0]).is_err());
        assert_eq!(accuracy(&[1, 0, 0, 1], &[1, 1, 0, 1]).unwrap(), 0.75);
    }

    #[test]
    fn aggregate_examples() {
        let r = aggregate(&[FoldMetrics { f1: 1.0, accuracy: 1.0 }; 5]).unwrap();
        assert_eq!(r.f1_display(), "1.000 ± 0.000");
        let r = aggregate(&[FoldMetrics { f1: 0.8, accuracy: 0.8 }, FoldMetrics { f1: 0.9, accuracy: 0.9 }]).unwrap();
        assert_eq!(r.f1_display(), "0.850 ± 0.071");
        assert_eq!(format_mean_std(0.874, 0.067), "0.874 ± 0.067");
    }

    proptest! {
        #[test]
        fn plans_hold_guarantees(n_pos in 5usize..30, n_neg in 5usize..30, k in 2usize..=5, seed in any::<u64>()) {
            let units = cohort(n_pos, n_neg);
            let plan = stratified_subject_kfold(&units, k, seed).unwrap();
            prop_assert!(plan.violations(&units).is_empty(), "{:?}", plan.violations(&units));
            prop_assert!(leakage_check(&plan, &BTreeMap::new()).passed);
        }

        #[test]
        fn f1_matches_confusion_matrix(pairs in proptest::collection::vec((0u8..2, 0u8..2), 1..60)) {
            let (preds, labels): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
            let mut cm = [[0usize; 2]; 2];
            for (p, l) in preds.iter().zip(&labels) {
                cm[*l as usize][*p as usize] += 1;
            }
            let (tp, fp, fn_) = (cm[1][1], cm[0][1], cm[1][0]);
            let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
            let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
            let brute = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
            prop_assert!((f1_score(&preds, &labels).unwrap() - brute).abs() < 1e-12);
        }
    }
}
