use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encoder::{Encoder, ForwardOutput, ParamSet};
use super::layers::Dropout;
use super::tape::Mat;
use super::{EncoderConfig, Posterior, SequenceInput, TrainConfig};
use crate::store::{FeatureMatrix, Modality, SubjectBundle};
use crate::{Error, Result};

const STD_FLOOR: f64 = 1e-8;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
/// Stream offset separating the dropout RNG from init and shuffling.
const DROPOUT_STREAM: u64 = 1;

/// Per-column z-scoring fitted on training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(cols: usize) -> Self {
        Self { mean: vec![0.0; cols], std: vec![1.0; cols] }
    }

    pub fn fit<'a>(cols: usize, inputs: impl IntoIterator<Item = &'a SequenceInput>) -> Self {
        let mut sum = vec![0.0; cols];
        let mut sq = vec![0.0; cols];
        let mut n = 0usize;
        for x in inputs {
            for r in 0..x.rows {
                for (c, v) in x.row(r).iter().enumerate() {
                    sum[c] += v;
                    sq[c] += v * v;
                }
            }
            n += x.rows;
        }
        if n == 0 {
            return Self::identity(cols);
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(s, m)| {
                let sd = (s / n as f64 - m * m).max(0.0).sqrt();
                if sd < STD_FLOOR {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, x: &SequenceInput) -> SequenceInput {
        let mut out = x.clone();
        for row in out.data.chunks_exact_mut(x.cols.max(1)) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        out
    }
}

/// Trained encoder with its input standardization.
#[derive(Debug, Clone)]
pub struct Model {
    pub encoder: Encoder,
    pub params: ParamSet,
    pub scaler: Standardizer,
    pub seed: u64,
    pub epochs: usize,
}

impl Model {
    pub fn config(&self) -> &EncoderConfig {
        self.encoder.config()
    }

    pub fn forward(&self, features: &FeatureMatrix) -> Result<ForwardOutput> {
        let x = SequenceInput::from_matrix(features)?;
        self.encoder.check_input(&x)?;
        self.encoder.forward(&self.params, &self.scaler.apply(&x))
    }

    pub fn predict(&self, features: &FeatureMatrix) -> Result<Posterior> {
        let out = self.forward(features)?;
        if !(out.logits[0].is_finite() && out.logits[1].is_finite()) {
            return Err(Error::NonFinite(format!("{} logits", self.config().kind.display())));
        }
        Ok(out.posterior)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mean training loss per completed epoch.
    pub epoch_loss: Vec<f64>,
    pub stopped_early: bool,
}

struct Adam {
    m: Vec<Mat>,
    v: Vec<Mat>,
    step: i32,
}

impl Adam {
    fn new(params: &ParamSet) -> Self {
        Self { m: params.zeros_like(), v: params.zeros_like(), step: 0 }
    }

    fn update(&mut self, params: &mut ParamSet, grads: &[Mat], lr: f64, weight_decay: f64) {
        self.step += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.step);
        let c2 = 1.0 - ADAM_BETA2.powi(self.step);
        for (((p, g), m), v) in params.mats_mut().iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.data.len() {
                let gi = g.data[i] + weight_decay * p.data[i];
                m.data[i] = ADAM_BETA1 * m.data[i] + (1.0 - ADAM_BETA1) * gi;
                v.data[i] = ADAM_BETA2 * v.data[i] + (1.0 - ADAM_BETA2) * gi * gi;
                let step = lr * (m.data[i] / c1) / ((v.data[i] / c2).sqrt() + ADAM_EPS);
                p.data[i] -= step;
            }
        }
    }
}

/// Trains one encoder on the given (training-fold) subjects.
///
/// Initialization, shuffling and dropout all derive from `tcfg.seed`, so two
/// calls with equal inputs return bitwise-equal parameters.
pub fn train(
    cfg: &EncoderConfig,
    tcfg: &TrainConfig,
    bundles: &[SubjectBundle],
    modality: Modality,
) -> Result<(Model, TrainHistory)> {
    let mut problems = cfg.violations();
    problems.extend(tcfg.violations());
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    let mut raw = Vec::new();
    let mut labels = Vec::new();
    for b in bundles {
        if let Some(m) = b.modality(modality) {
            let x = SequenceInput::from_matrix(m)?;
            if x.cols != cfg.input_dim {
                return Err(Error::Shape(format!(
                    "{}: {modality} rows have {} features, encoder expects {}",
                    b.subject_id, x.cols, cfg.input_dim
                )));
            }
            raw.push(x);
            labels.push(b.label);
        }
    }
    if raw.len() < 2 {
        return Err(Error::InvalidArgument(format!("need at least two subjects with {modality} data")));
    }
    if !(labels.contains(&0) && labels.contains(&1)) {
        return Err(Error::SingleClass);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let mut drop_rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    drop_rng.set_stream(DROPOUT_STREAM);
    let (encoder, mut params) = Encoder::build(*cfg, &mut rng);
    let scaler = Standardizer::fit(cfg.input_dim, &raw);
    let inputs: Vec<SequenceInput> = raw.iter().map(|x| scaler.apply(x)).collect();

    let mut adam = Adam::new(&params);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut history = TrainHistory { epoch_loss: Vec::new(), stopped_early: false };
    let mut best = f64::INFINITY;
    let mut stale = 0;
    for _ in 0..tcfg.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(tcfg.batch_size) {
            let mut grads = params.zeros_like();
            for &i in batch {
                let dropout = Dropout { rate: cfg.dropout, rng: &mut drop_rng };
                total += encoder.accumulate(&params, &inputs[i], labels[i], Some(dropout), &mut grads)?;
            }
            let scale = 1.0 / batch.len() as f64;
            for g in &mut grads {
                g.data.iter_mut().for_each(|v| *v *= scale);
            }
            adam.update(&mut params, &grads, tcfg.learning_rate, tcfg.weight_decay);
        }
        let mean = total / inputs.len() as f64;
        if !mean.is_finite() {
            return Err(Error::NonFinite(format!("training loss at epoch {}", history.epoch_loss.len() + 1)));
        }
        history.epoch_loss.push(mean);
        if mean < best {
            best = mean;
            stale = 0;
        } else {
            stale += 1;
            if stale >= tcfg.patience {
                history.stopped_early = true;
                break;
            }
        }
    }
    let epochs = history.epoch_loss.len();
    Ok((Model { encoder, params, scaler, seed: tcfg.seed, epochs }, history))
}

/// Per-parameter comparison of analytic and finite-difference gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckEntry {
    pub name: String,
    pub max_rel_error: f64,
    pub max_abs_analytic: f64,
    pub max_abs_numeric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn entry(&self, name: &str) -> Option<&GradCheckEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

const FD_STEP: f64 = 1e-4;
/// Denominator floor so entries with both gradients near zero compare
/// absolutely.
const REL_FLOOR: f64 = 1e-6;

/// Central-difference check (step 1e-4) of every parameter of an encoder
/// with dropout disabled.
pub fn grad_check(encoder: &Encoder, params: &ParamSet, x: &SequenceInput, label: u8) -> Result<GradCheckReport> {
    let (_, analytic) = encoder.gradient(params, x, label)?;
    let mut probe = params.clone();
    let mut entries = Vec::with_capacity(params.len());
    for (k, name) in params.names().iter().enumerate() {
        let mut e = GradCheckEntry { name: name.clone(), max_rel_error: 0.0, max_abs_analytic: 0.0, max_abs_numeric: 0.0 };
        for i in 0..params.mats()[k].len() {
            let orig = params.mats()[k].data[i];
            probe.mats_mut()[k].data[i] = orig + FD_STEP;
            let hi = encoder.loss(&probe, x, label)?;
            probe.mats_mut()[k].data[i] = orig - FD_STEP;
            let lo = encoder.loss(&probe, x, label)?;
            probe.mats_mut()[k].data[i] = orig;
            let num = (hi - lo) / (2.0 * FD_STEP);
            let ana = analytic[k].data[i];
            let rel = (ana - num).abs() / ana.abs().max(num.abs()).max(REL_FLOOR);
            e.max_rel_error = e.max_rel_error.max(rel);
            e.max_abs_analytic = e.max_abs_analytic.max(ana.abs());
            e.max_abs_numeric = e.max_abs_numeric.max(num.abs());
        }
        entries.push(e);
    }
    let max_rel_error = entries.iter().map(|e| e.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport { max_rel_error, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{EncoderKind, SpeechPool};
    use crate::store::FeatureKind;
    use rand::Rng;

    fn tiny_input(rows: usize, cols: usize, groups: Vec<usize>, seed: u64) -> SequenceInput {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SequenceInput::with_groups(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.5..1.5)).collect(), groups)
            .unwrap()
    }

    fn check_kind(kind: EncoderKind) -> GradCheckReport {
        let cfg = EncoderConfig::new(kind, 5).with_hidden(4).with_dropout(0.0);
        let (enc, params) = Encoder::new(cfg, 21).unwrap();
        let x = tiny_input(6, 5, vec![2, 1, 3], 8);
        grad_check(&enc, &params, &x, 1).unwrap()
    }

    #[test]
    fn grad_check_every_architecture() {
        for kind in [
            EncoderKind::EegCnnLstm,
            EncoderKind::EegGruAttn,
            EncoderKind::SpeechCnnPoolLstm(SpeechPool::Max),
            EncoderKind::SpeechCnnPoolLstm(SpeechPool::GruAttn),
            EncoderKind::SpeechCnnPoolLstm(SpeechPool::BiGruAttn),
            EncoderKind::TextLstm,
            EncoderKind::TextCnn,
        ] {
            let r = check_kind(kind);
            assert!(r.max_rel_error < 1e-4, "{kind:?}: {r:?}");
        }
    }

    #[test]
    fn flat_direction_has_zero_gradient() {
        // one row: attention weight is identically 1, so its parameters are flat
        let cfg = EncoderConfig::new(EncoderKind::EegGruAttn, 3).with_hidden(4).with_dropout(0.0);
        let (enc, params) = Encoder::new(cfg, 2).unwrap();
        let r = grad_check(&enc, &params, &tiny_input(1, 3, vec![1], 3), 0).unwrap();
        for name in ["attn.w", "attn.v"] {
            let e = r.entry(name).unwrap();
            assert!(e.max_abs_analytic < 1e-8 && e.max_abs_numeric < 1e-8, "{e:?}");
        }
    }

    fn bundle(id: usize, label: u8, rows: usize, shift: f64, rng: &mut ChaCha8Rng) -> SubjectBundle {
        let data = (0..rows * 40).map(|_| rng.gen_range(-1.0..1.0) + if label == 1 { shift } else { -shift }).collect();
        SubjectBundle {
            subject_id: format!("S{id:02}"),
            label,
            eeg: None,
            speech: Some(FeatureMatrix::new(FeatureKind::Mfcc, rows, 40, data).unwrap()),
            text: None,
        }
    }

    fn cohort(n: usize, shift: f64) -> Vec<SubjectBundle> {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        (0..n).map(|i| bundle(i, (i % 2) as u8, 3, shift, &mut rng)).collect()
    }

    fn small(kind: EncoderKind) -> EncoderConfig {
        EncoderConfig::new(kind, 40).with_hidden(6).with_layers(1)
    }

    #[test]
    fn deterministic_given_seed() {
        let data = cohort(8, 0.5);
        let tcfg = TrainConfig { max_epochs: 5, seed: 17, ..Default::default() };
        let cfg = small(EncoderKind::TextLstm);
        let (a, ha) = train(&cfg, &tcfg, &data, Modality::Speech).unwrap();
        let (b, hb) = train(&cfg, &tcfg, &data, Modality::Speech).unwrap();
        assert!(a.params.flatten().iter().zip(b.params.flatten()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(ha, hb);
    }

    #[test]
    fn separable_data_is_learned() {
        let data = cohort(12, 1.0);
        let tcfg = TrainConfig { learning_rate: 1e-2, max_epochs: 200, seed: 1, ..Default::default() };
        let (model, history) = train(&small(EncoderKind::TextCnn), &tcfg, &data, Modality::Speech).unwrap();
        assert!(history.epoch_loss.len() <= 200);
        let preds: Vec<u8> = data.iter().map(|b| model.predict(b.speech.as_ref().unwrap()).unwrap().label()).collect();
        let labels: Vec<u8> = data.iter().map(|b| b.label).collect();
        assert_eq!(crate::eval::f1_score(&preds, &labels).unwrap(), 1.0);
    }

    #[test]
    fn zero_learning_rate_freezes_parameters() {
        let data = cohort(6, 0.5);
        let tcfg = TrainConfig { learning_rate: 0.0, max_epochs: 3, seed: 4, ..Default::default() };
        let cfg = small(EncoderKind::EegGruAttn);
        let (model, _) = train(&cfg, &tcfg, &data, Modality::Speech).unwrap();
        let (_, init) = Encoder::build(cfg, &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(model.params, init);
    }

    #[test]
    fn single_class_fold_rejected() {
        let mut data = cohort(6, 0.5);
        data.iter_mut().for_each(|b| b.label = 1);
        let tcfg = TrainConfig { max_epochs: 1, ..Default::default() };
        let err = train(&small(EncoderKind::TextLstm), &tcfg, &data, Modality::Speech);
        assert!(matches!(err, Err(Error::SingleClass)));
    }

    #[test]
    fn early_stopping_records_history() {
        let data = cohort(6, 0.5);
        let tcfg = TrainConfig { learning_rate: 0.0, max_epochs: 50, patience: 3, ..Default::default() };
        let cfg = small(EncoderKind::TextLstm).with_dropout(0.0);
        let (_, h) = train(&cfg, &tcfg, &data, Modality::Speech).unwrap();
        // a frozen model has a flat loss: one best epoch plus `patience` stale ones
        assert!(h.stopped_early);
        assert_eq!(h.epoch_loss.len(), 4);
    }

    #[test]
    fn batch_loss_matches_per_sample_mean() {
        let data = cohort(4, 0.5);
        let cfg = small(EncoderKind::TextCnn).with_dropout(0.0);
        let (enc, params) = Encoder::new(cfg, 3).unwrap();
        let inputs: Vec<SequenceInput> =
            data.iter().map(|b| SequenceInput::from_matrix(b.speech.as_ref().unwrap()).unwrap()).collect();
        let mut grads = params.zeros_like();
        let mut total = 0.0;
        for (x, b) in inputs.iter().zip(&data) {
            total += enc.accumulate(&params, x, b.label, None, &mut grads).unwrap();
        }
        let brute: f64 = inputs
            .iter()
            .zip(&data)
            .map(|(x, b)| crate::nn::loss(&enc.forward(&params, x).unwrap().posterior, b.label))
            .sum();
        assert!((total / 4.0 - brute / 4.0).abs() < 1e-9);
    }

    #[test]
    fn inference_is_deterministic() {
        let data = cohort(6, 0.5);
        let tcfg = TrainConfig { max_epochs: 2, ..Default::default() };
        let (model, _) = train(&small(EncoderKind::EegCnnLstm), &tcfg, &data, Modality::Speech).unwrap();
        let m = data[0].speech.as_ref().unwrap();
        assert_eq!(model.predict(m).unwrap(), model.predict(m).unwrap());
    }
}
