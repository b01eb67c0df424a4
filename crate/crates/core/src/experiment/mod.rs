//! Config-driven experiment graph: split → preprocess → features → train per
//! modality and fold → fuse → report.
//!
//! Every stage reads its inputs from and writes its outputs under
//! `output_dir`, so stages can be run one at a time or chained by [`run`]:
//!
//! ```text
//! split.json                       one fold plan shared by all experiments
//! preprocess.json                  segment counts per subject
//! features/<subject>/manifest.json derived feature tensors
//! posteriors/<modality>_fold<i>.json
//! models/<modality>_fold<i>.{json,tdep}
//! fusion/<nn>_<strategy>.json
//! report.txt, report.json
//! run_manifest.json
//! ```

mod config;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use config::{is_derivable, EncoderSpec, ExperimentConfig, FusionSpec, ModalityConfig, TrainSpec};

use crate::dsp::{self, read_wav, SignalBuffer};
use crate::eeg::{self, handcrafted_features, preprocess_branch1, EegSegmentTensor};
use crate::eval::{aggregate, stratified_subject_kfold, FoldMetrics, FoldPlan, MetricsReport, ReportRow, ResultsReport};
use crate::fusion::{Fuser, FusionDecision, FusionStrategy, FusionWeights, PosteriorRecord, Posteriors};
use crate::nn::{self, save_model};
use crate::speech::{preprocess_speech, SpeechFeaturizer, SpeechSegmentMatrix};
use crate::store::{
    assemble_bundle, load_cohort, read_tensor, write_tensor, BundleSelection, FeatureKind, ManifestEntry, Modality,
    SubjectBundle, SubjectManifest, Tdep1Tensor, MANIFEST_FILE,
};
use crate::{synth, Error, Result};

pub const SPLIT_FILE: &str = "split.json";
pub const PREPROCESS_FILE: &str = "preprocess.json";
pub const REPORT_TEXT_FILE: &str = "report.txt";
pub const REPORT_JSON_FILE: &str = "report.json";
pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";
pub const TOOL_NAME: &str = "tridep";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

fn posterior_path(out: &Path, m: Modality, fold: usize) -> PathBuf {
    out.join("posteriors").join(format!("{m}_fold{fold}.json"))
}

fn fusion_path(out: &Path, index: usize, strategy: FusionStrategy) -> PathBuf {
    let name = serde_json::to_value(strategy).expect("strategy serializes");
    out.join("fusion").join(format!("{index:02}_{}.json", name.as_str().unwrap_or("fusion")))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the training task for one modality and fold.
pub fn task_seed(seed: u64, modality: Modality, fold: usize) -> u64 {
    let m = Modality::ALL.iter().position(|&x| x == modality).unwrap_or(0) as u64;
    mix(seed ^ mix((m << 32) | fold as u64))
}

fn cohort(cfg: &ExperimentConfig) -> Result<Vec<SubjectManifest>> {
    let cohort = load_cohort(&cfg.dataset_root).map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", cfg.dataset_root.display()))),
        other => other,
    })?;
    if cohort.is_empty() {
        return Err(Error::Manifest(vec![format!("no subject manifests under {}", cfg.dataset_root.display())]));
    }
    Ok(cohort)
}

fn units(cohort: &[SubjectManifest]) -> Vec<(String, u8)> {
    cohort.iter().map(|m| (m.subject_id.clone(), m.label)).collect()
}

/// Writes the synthetic cohort described by `cfg.synth` into `dataset_root`.
pub fn synthesize(cfg: &ExperimentConfig) -> Result<Vec<SubjectManifest>> {
    cfg.validate()?;
    let Some(spec) = &cfg.synth else {
        return Err(Error::Config(vec!["config has no synth section".into()]));
    };
    synth::generate(spec, &cfg.dataset_root)
}

/// Computes the one fold plan of the run and writes `split.json`.
pub fn split(cfg: &ExperimentConfig) -> Result<FoldPlan> {
    cfg.validate()?;
    let cohort = cohort(cfg)?;
    let plan = stratified_subject_kfold(&units(&cohort), cfg.k, cfg.seed)?;
    fs::create_dir_all(&cfg.output_dir)?;
    plan.save(cfg.output_dir.join(SPLIT_FILE))?;
    Ok(plan)
}

fn load_plan(cfg: &ExperimentConfig, cohort: &[SubjectManifest]) -> Result<FoldPlan> {
    let plan = FoldPlan::load(cfg.output_dir.join(SPLIT_FILE))?;
    let problems = plan.violations(&units(cohort));
    if !problems.is_empty() {
        return Err(Error::Manifest(problems));
    }
    Ok(plan)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingSegments {
    pub recording_index: usize,
    pub segments: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessSummary {
    pub subject_id: String,
    /// Branch-1 windows, when EEG features are derived from raw signal.
    pub eeg_segments: Option<usize>,
    pub speech: Vec<RecordingSegments>,
}

struct Preprocessed {
    eeg: Option<EegSegmentTensor>,
    speech: Vec<SpeechSegmentMatrix>,
}

impl Preprocessed {
    fn summary(&self, subject_id: &str) -> PreprocessSummary {
        PreprocessSummary {
            subject_id: subject_id.to_string(),
            eeg_segments: self.eeg.as_ref().map(|e| e.shape().0),
            speech: self
                .speech
                .iter()
                .map(|s| RecordingSegments { recording_index: s.recording_index, segments: s.num_segments() })
                .collect(),
        }
    }
}

/// Derivable kind a modality needs computed, if the dataset lacks it.
fn derived_kind(cfg: &ExperimentConfig, m: &SubjectManifest, modality: Modality) -> Option<FeatureKind> {
    let kind = cfg.modalities.get(&modality)?.feature_kind;
    (is_derivable(kind) && !m.has_kind(kind)).then_some(kind)
}

fn load_raw_eeg(m: &SubjectManifest) -> Result<SignalBuffer> {
    let entry = m
        .entries_of(FeatureKind::RawEeg)
        .into_iter()
        .next()
        .ok_or_else(|| Error::Manifest(vec![format!("{}: no raw_eeg entry to derive features from", m.subject_id)]))?;
    let t = read_tensor(m.resolve(entry))?;
    let [channels, samples] = t.dims() else {
        return Err(Error::Shape(format!("{}: raw EEG dims {:?}", m.subject_id, t.dims())));
    };
    let (channels, samples) = (*channels, *samples);
    let data = t.to_f64();
    let rows = (0..channels).map(|c| data[c * samples..(c + 1) * samples].to_vec()).collect();
    let names = entry.channel_names.clone().unwrap_or_else(|| (1..=channels).map(|c| format!("ch{c}")).collect());
    let rate = entry.sample_rate.unwrap_or(eeg::BRANCH1_RATE);
    let sig = SignalBuffer::new(rows, rate, names)?;
    if rate == eeg::BRANCH1_RATE {
        Ok(sig)
    } else {
        dsp::resample(&sig, eeg::BRANCH1_RATE)
    }
}

fn preprocess_subject(cfg: &ExperimentConfig, m: &SubjectManifest) -> Result<Preprocessed> {
    let eeg = match derived_kind(cfg, m, Modality::Eeg) {
        Some(_) => Some(preprocess_branch1(&load_raw_eeg(m)?, &cfg.eeg_channels())?),
        None => None,
    };
    let mut speech = Vec::new();
    if derived_kind(cfg, m, Modality::Speech).is_some() {
        for e in m.entries_of(FeatureKind::Wav) {
            let rec = e.recording_index.expect("validated speech entries carry an index");
            speech.push(preprocess_speech(&read_wav(m.resolve(e))?, rec)?);
        }
    }
    Ok(Preprocessed { eeg, speech })
}

/// Runs the signal preprocessing for every subject and writes segment
/// counts to `preprocess.json`.
pub fn preprocess(cfg: &ExperimentConfig) -> Result<Vec<PreprocessSummary>> {
    cfg.validate()?;
    let cohort = cohort(cfg)?;
    let mut out = Vec::with_capacity(cohort.len());
    for m in &cohort {
        out.push(preprocess_subject(cfg, m)?.summary(&m.subject_id));
    }
    write_json(&cfg.output_dir.join(PREPROCESS_FILE), &out)?;
    Ok(out)
}

fn features_root(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir.join("features")
}

fn feature_entry(kind: FeatureKind, recording_index: Option<usize>, tensor_path: String, dims: Vec<usize>) -> ManifestEntry {
    ManifestEntry {
        modality: kind.modality(),
        feature_kind: kind,
        recording_index,
        tensor_path,
        dims,
        sample_rate: None,
        channel_names: None,
    }
}

/// Derives the configured handcrafted EEG and speech features the dataset
/// does not already provide, writing one manifest per subject under
/// `features/`. Also writes `preprocess.json`.
pub fn features(cfg: &ExperimentConfig) -> Result<Vec<PreprocessSummary>> {
    cfg.validate()?;
    let cohort = cohort(cfg)?;
    let featurizer = SpeechFeaturizer::new();
    let mut summaries = Vec::with_capacity(cohort.len());
    for m in &cohort {
        let prep = preprocess_subject(cfg, m)?;
        summaries.push(prep.summary(&m.subject_id));
        let root = features_root(cfg).join(&m.subject_id);
        let mut out = SubjectManifest::new(&m.subject_id, m.label, &root);
        if let Some(seg) = &prep.eeg {
            let f = handcrafted_features(seg)?;
            let dims = vec![f.segments, f.channels, eeg::NUM_DESCRIPTORS];
            fs::create_dir_all(&root)?;
            write_tensor(&Tdep1Tensor::from_f64(dims.clone(), &f.data)?, root.join("eeg_handcrafted.tdep"))?;
            out.entries.push(feature_entry(FeatureKind::Handcrafted, None, "eeg_handcrafted.tdep".into(), dims));
        }
        if let Some(kind) = derived_kind(cfg, m, Modality::Speech) {
            fs::create_dir_all(root.join("speech"))?;
            for rec in &prep.speech {
                let f = featurizer.featurize(rec, kind)?;
                if f.rows() == 0 {
                    continue;
                }
                let path = format!("speech/{}_rec{:02}.tdep", kind.name(), rec.recording_index);
                let dims = vec![f.rows(), f.cols()];
                write_tensor(&Tdep1Tensor::from_f64(dims.clone(), f.data())?, root.join(&path))?;
                out.entries.push(feature_entry(kind, Some(rec.recording_index), path, dims));
            }
        }
        if !out.entries.is_empty() {
            out.save()?;
        }
    }
    write_json(&cfg.output_dir.join(PREPROCESS_FILE), &summaries)?;
    Ok(summaries)
}

/// One bundle per subject with the configured feature kind of every
/// modality, read from the dataset or from `features/`.
pub fn load_bundles(cfg: &ExperimentConfig) -> Result<Vec<SubjectBundle>> {
    let cohort = cohort(cfg)?;
    bundles_of(cfg, &cohort)
}

fn bundles_of(cfg: &ExperimentConfig, cohort: &[SubjectManifest]) -> Result<Vec<SubjectBundle>> {
    let mut bundles = Vec::with_capacity(cohort.len());
    for m in cohort {
        let derived_path = features_root(cfg).join(&m.subject_id).join(MANIFEST_FILE);
        let derived = if derived_path.is_file() { Some(SubjectManifest::load(&derived_path)?) } else { None };
        let mut bundle =
            SubjectBundle { subject_id: m.subject_id.clone(), label: m.label, eeg: None, speech: None, text: None };
        for (&modality, mc) in &cfg.modalities {
            let kind = mc.feature_kind;
            let source = if m.has_kind(kind) {
                m
            } else if let Some(d) = derived.as_ref().filter(|d| d.has_kind(kind)) {
                d
            } else if is_derivable(kind) && (m.has_kind(FeatureKind::Wav) || m.has_kind(FeatureKind::RawEeg)) {
                return Err(Error::Manifest(vec![format!(
                    "{}: {} features missing; run the features stage",
                    m.subject_id,
                    kind.name()
                )]));
            } else {
                continue;
            };
            let mut sel = BundleSelection::default();
            sel.set(modality, Some(kind));
            let b = assemble_bundle(source, &sel)?;
            match modality {
                Modality::Eeg => bundle.eeg = b.eeg,
                Modality::Speech => bundle.speech = b.speech,
                Modality::Text => bundle.text = b.text,
            }
        }
        bundles.push(bundle);
    }
    Ok(bundles)
}

/// Outcome of one (modality, fold) training task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub modality: Modality,
    pub fold: usize,
    pub seed: u64,
    pub epochs: usize,
    pub final_loss: f64,
    pub stopped_early: bool,
}

/// Trains one encoder per modality and fold on the training side of the
/// plan, writing test-fold posteriors and checkpoints.
pub fn train(cfg: &ExperimentConfig) -> Result<Vec<TaskSummary>> {
    cfg.validate()?;
    let cohort = cohort(cfg)?;
    let plan = load_plan(cfg, &cohort)?;
    let bundles = bundles_of(cfg, &cohort)?;
    let by_id: BTreeMap<&str, &SubjectBundle> = bundles.iter().map(|b| (b.subject_id.as_str(), b)).collect();
    let mut summaries = Vec::new();
    for (&modality, mc) in &cfg.modalities {
        let ecfg = mc.encoder_config().expect("validated feature kind has a width");
        for fold in 0..plan.k {
            let seed = task_seed(cfg.seed, modality, fold);
            let train_set: Vec<SubjectBundle> =
                plan.train_ids(fold).iter().map(|id| by_id[id.as_str()].clone()).collect();
            let (model, history) = nn::train(&ecfg, &cfg.train.with_seed(seed), &train_set, modality)?;
            let mut records = Vec::new();
            for id in plan.test_ids(fold) {
                let b = by_id[id.as_str()];
                if let Some(x) = b.modality(modality) {
                    let p = model.predict(x)?;
                    records.push(PosteriorRecord::new(id.clone(), modality, &p, b.label));
                }
            }
            write_json(&posterior_path(&cfg.output_dir, modality, fold), &records)?;
            let stem = format!("{modality}_fold{fold}");
            save_model(&model, cfg.output_dir.join("models"), &stem)?;
            let summary = TaskSummary {
                modality,
                fold,
                seed,
                epochs: history.epoch_loss.len(),
                final_loss: history.epoch_loss.last().copied().unwrap_or(f64::NAN),
                stopped_early: history.stopped_early,
            };
            write_json(&cfg.output_dir.join("models").join(format!("{stem}_history.json")), &history)?;
            summaries.push(summary);
        }
    }
    Ok(summaries)
}

/// Fused decision for one test subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedRecord {
    pub subject_id: String,
    pub fold: usize,
    pub p1: Option<f64>,
    pub predicted_label: u8,
    pub true_label: u8,
}

/// Decisions of one fusion experiment across all folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionRun {
    pub strategy: FusionStrategy,
    pub modalities: Vec<Modality>,
    pub weights: String,
    pub records: Vec<FusedRecord>,
}

/// Per-fold posteriors: subject → (label, posteriors by modality).
type FoldPosteriors = BTreeMap<String, (u8, Posteriors)>;

fn load_posteriors(cfg: &ExperimentConfig, k: usize) -> Result<Vec<FoldPosteriors>> {
    let mut folds = vec![FoldPosteriors::new(); k];
    for &modality in cfg.modalities.keys() {
        for (fold, map) in folds.iter_mut().enumerate() {
            let records: Vec<PosteriorRecord> = read_json(&posterior_path(&cfg.output_dir, modality, fold))?;
            for r in records {
                if r.modality != modality {
                    return Err(Error::Manifest(vec![format!(
                        "{} fold {fold}: record for {} in the {modality} file",
                        r.subject_id, r.modality
                    )]));
                }
                let p = r.posterior()?;
                map.entry(r.subject_id).or_insert_with(|| (r.true_label, Posteriors::new())).1.insert(modality, p);
            }
        }
    }
    Ok(folds)
}

/// Fuses the posteriors available for one subject. Weights are renormalized
/// over present modalities; a single present modality decides alone.
fn fuse_subject(fuser: &Fuser, spec: &FusionSpec, ps: &Posteriors) -> Result<FusionDecision> {
    match spec.strategy {
        FusionStrategy::WeightedAverage | FusionStrategy::Bayesian => {
            let all = spec.weights.as_ref().expect("validated weighted strategy");
            let present: BTreeMap<Modality, f64> =
                all.iter().filter(|(m, _)| ps.contains_key(m)).map(|(m, w)| (*m, *w)).collect();
            let total: f64 = present.values().sum();
            let w = if total > 0.0 {
                FusionWeights::new(present.into_iter().map(|(m, w)| (m, w / total)).collect())?
            } else {
                FusionWeights::uniform(ps.keys().copied())?
            };
            if spec.strategy == FusionStrategy::Bayesian {
                fuser.bayesian_fuse(ps, &w, spec.prior.unwrap_or(0.5))
            } else {
                fuser.weighted_average(ps, &w)
            }
        }
        FusionStrategy::SoftVote => fuser.soft_vote(ps),
        FusionStrategy::MajorityVote if ps.len() >= 2 => {
            let labels = ps.iter().map(|(m, p)| (*m, fuser.decide(p))).collect();
            fuser.majority_vote(&labels, ps)
        }
        FusionStrategy::MajorityVote => fuser.soft_vote(ps),
    }
}

/// Applies every configured fusion strategy to the stored test-fold
/// posteriors and writes one decision file per strategy.
pub fn fuse(cfg: &ExperimentConfig) -> Result<Vec<FusionRun>> {
    cfg.validate()?;
    let cohort = cohort(cfg)?;
    let plan = load_plan(cfg, &cohort)?;
    let folds = load_posteriors(cfg, plan.k)?;
    let fuser = Fuser::default();
    let mut runs = Vec::with_capacity(cfg.fusion.len());
    for (i, spec) in cfg.fusion.iter().enumerate() {
        let modalities = spec.fused_modalities(&cfg.modalities);
        let mut records = Vec::new();
        for (fold, posteriors) in folds.iter().enumerate() {
            for id in plan.test_ids(fold) {
                let Some((label, all)) = posteriors.get(id) else { continue };
                let ps: Posteriors = all.iter().filter(|(m, _)| modalities.contains(m)).map(|(m, p)| (*m, *p)).collect();
                if ps.is_empty() {
                    continue;
                }
                let d = fuse_subject(&fuser, spec, &ps)?;
                records.push(FusedRecord {
                    subject_id: id.clone(),
                    fold,
                    p1: d.fused_posterior.map(|p| p.p1()),
                    predicted_label: d.predicted_label,
                    true_label: *label,
                });
            }
        }
        let run = FusionRun { strategy: spec.strategy, modalities, weights: spec.weights_label(), records };
        write_json(&fusion_path(&cfg.output_dir, i, spec.strategy), &run)?;
        runs.push(run);
    }
    Ok(runs)
}

fn metrics_of(k: usize, decided: impl Iterator<Item = (usize, u8, u8)>) -> Result<MetricsReport> {
    let mut preds = vec![Vec::new(); k];
    let mut labels = vec![Vec::new(); k];
    for (fold, pred, label) in decided {
        preds[fold].push(pred);
        labels[fold].push(label);
    }
    let per_fold = preds.iter().zip(&labels).map(|(p, l)| FoldMetrics::score(p, l)).collect::<Result<Vec<_>>>()?;
    aggregate(&per_fold)
}

fn experiment_name(modalities: &[Modality]) -> String {
    modalities.iter().map(|m| m.display()).collect::<Vec<_>>().join(" + ")
}

/// Scores the stored posteriors and fused decisions against the plan and
/// writes `report.txt` and `report.json`.
pub fn report(cfg: &ExperimentConfig) -> Result<ResultsReport> {
    cfg.validate()?;
    let cohort = cohort(cfg)?;
    let plan = load_plan(cfg, &cohort)?;
    let fuser = Fuser::default();
    let mut unimodal = Vec::new();
    for (&modality, mc) in &cfg.modalities {
        let mut decided = Vec::new();
        for fold in 0..plan.k {
            let records: Vec<PosteriorRecord> = read_json(&posterior_path(&cfg.output_dir, modality, fold))?;
            for r in records {
                decided.push((fold, fuser.decide(&r.posterior()?), r.true_label));
            }
        }
        unimodal.push(ReportRow {
            experiment: modality.display().into(),
            features: mc.feature_kind.display().into(),
            model: mc.encoder.kind.display().into(),
            metrics: metrics_of(plan.k, decided.into_iter())?,
        });
    }
    let mut fusion = Vec::new();
    for (i, spec) in cfg.fusion.iter().enumerate() {
        let run: FusionRun = read_json(&fusion_path(&cfg.output_dir, i, spec.strategy))?;
        if run.strategy != spec.strategy {
            return Err(Error::Manifest(vec![format!("fusion file {i} holds {:?}", run.strategy)]));
        }
        let metrics = metrics_of(plan.k, run.records.iter().map(|r| (r.fold, r.predicted_label, r.true_label)))?;
        fusion.push(ReportRow {
            experiment: experiment_name(&run.modalities),
            features: run.weights.clone(),
            model: spec.strategy.display().into(),
            metrics,
        });
    }
    let report = ResultsReport { seed: cfg.seed, k: plan.k, unimodal, fusion };
    fs::create_dir_all(&cfg.output_dir)?;
    fs::write(cfg.output_dir.join(REPORT_TEXT_FILE), report.to_text())?;
    fs::write(cfg.output_dir.join(REPORT_JSON_FILE), report.to_json())?;
    Ok(report)
}

/// Provenance of a `run`: no timestamps, so reruns are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub k: usize,
    pub subjects: usize,
    pub stages: Vec<String>,
}

/// Validates the config, then runs every stage in order.
pub fn run(cfg: &ExperimentConfig) -> Result<ResultsReport> {
    cfg.validate()?;
    let mut stages = Vec::new();
    if cfg.synth.is_some() {
        synthesize(cfg)?;
        stages.push("synth");
    }
    let plan = split(cfg)?;
    features(cfg)?;
    train(cfg)?;
    fuse(cfg)?;
    let report = report(cfg)?;
    stages.extend(["split", "preprocess", "features", "train", "fuse", "report"]);
    let manifest = RunManifest {
        tool: TOOL_NAME.into(),
        version: TOOL_VERSION.into(),
        config_sha256: cfg.hash(),
        seed: cfg.seed,
        k: cfg.k,
        subjects: plan.folds.iter().map(Vec::len).sum(),
        stages: stages.into_iter().map(String::from).collect(),
    };
    write_json(&cfg.output_dir.join(RUN_MANIFEST_FILE), &manifest)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::SynthSpec;

    fn tiny(dir: &Path, spec: SynthSpec) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default_trimodal(dir.join("data"), dir.join("out"));
        cfg.k = 2;
        cfg.train.max_epochs = 3;
        cfg.synth = Some(SynthSpec { eeg_seconds: 20.0, recordings: 3, recording_seconds: (5.0, 6.0), ..spec });
        cfg
    }

    #[test]
    fn task_seeds_differ() {
        let mut seen: Vec<u64> = Modality::ALL.iter().flat_map(|&m| (0..5).map(move |f| task_seed(7, m, f))).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 15);
    }

    #[test]
    fn run_writes_every_artifact() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(dir.path(), SynthSpec::strong(6, 3));
        let report = run(&cfg).unwrap();
        assert_eq!(report.unimodal.len(), 3);
        assert_eq!(report.fusion.len(), 4);
        let out = &cfg.output_dir;
        for f in [SPLIT_FILE, PREPROCESS_FILE, REPORT_TEXT_FILE, REPORT_JSON_FILE, RUN_MANIFEST_FILE] {
            assert!(out.join(f).is_file(), "{f}");
        }
        assert!(out.join("posteriors/text_fold1.json").is_file());
        assert!(out.join("models/eeg_fold0.tdep").is_file());
        assert!(out.join("features/S001/manifest.json").is_file());
        let prep: Vec<PreprocessSummary> = read_json(&out.join(PREPROCESS_FILE)).unwrap();
        assert_eq!(prep[0].eeg_segments, Some(2));
        assert_eq!(prep[0].speech.len(), 3);
    }

    #[test]
    fn posteriors_only_cover_test_subjects() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(dir.path(), SynthSpec::strong(6, 5));
        run(&cfg).unwrap();
        let plan = FoldPlan::load(cfg.output_dir.join(SPLIT_FILE)).unwrap();
        for fold in 0..plan.k {
            let recs: Vec<PosteriorRecord> = read_json(&posterior_path(&cfg.output_dir, Modality::Eeg, fold)).unwrap();
            let ids: Vec<&str> = recs.iter().map(|r| r.subject_id.as_str()).collect();
            let expected: Vec<&str> = plan.test_ids(fold).iter().map(String::as_str).collect();
            assert_eq!(ids, expected);
        }
    }

    #[test]
    fn invalid_config_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny(dir.path(), SynthSpec::strong(6, 3));
        cfg.k = 0;
        assert!(matches!(run(&cfg), Err(Error::Config(_))));
        assert!(!cfg.output_dir.exists());
        assert!(!cfg.dataset_root.exists());
    }

    #[test]
    fn missing_dataset_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny(dir.path(), SynthSpec::strong(6, 3));
        cfg.synth = None;
        let err = split(&cfg).unwrap_err();
        assert_eq!(err.category(), crate::ErrorCategory::Data);
    }

    #[test]
    fn stages_need_their_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(dir.path(), SynthSpec::strong(6, 3));
        synthesize(&cfg).unwrap();
        split(&cfg).unwrap();
        assert!(matches!(train(&cfg), Err(Error::Manifest(_))));
        assert!(fuse(&cfg).is_err());
    }
}
