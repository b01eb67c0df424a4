use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::fusion::{FusionStrategy, FusionWeights};
use crate::nn::{EncoderConfig, EncoderKind, SpeechPool, TrainConfig};
use crate::store::{FeatureKind, Modality};
use crate::synth::SynthSpec;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSpec {
    pub kind: EncoderKind,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_layers")]
    pub layers: usize,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
}

fn default_hidden() -> usize {
    64
}

fn default_layers() -> usize {
    2
}

fn default_dropout() -> f64 {
    0.3
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModalityConfig {
    pub feature_kind: FeatureKind,
    pub encoder: EncoderSpec,
}

impl ModalityConfig {
    /// Encoder configuration with the input width implied by the feature kind.
    pub fn encoder_config(&self) -> Option<EncoderConfig> {
        let dim = self.feature_kind.feature_dim()?;
        Some(
            EncoderConfig::new(self.encoder.kind, dim)
                .with_hidden(self.encoder.hidden)
                .with_layers(self.encoder.layers)
                .with_dropout(self.encoder.dropout),
        )
    }
}

/// Optimizer settings shared by every training task. Each task's seed is
/// derived from the experiment seed, the modality and the fold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub weight_decay: f64,
    pub batch_size: usize,
}

impl Default for TrainSpec {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            learning_rate: d.learning_rate,
            max_epochs: d.max_epochs,
            patience: d.patience,
            weight_decay: d.weight_decay,
            batch_size: d.batch_size,
        }
    }
}

impl TrainSpec {
    pub fn with_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed,
            weight_decay: self.weight_decay,
            batch_size: self.batch_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionSpec {
    pub strategy: FusionStrategy,
    /// Required by weighted averaging and Bayesian fusion; their keys name
    /// the fused modalities.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<BTreeMap<Modality, f64>>,
    /// Modalities for soft and majority voting; all configured ones when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modalities: Option<Vec<Modality>>,
    /// Class-1 prior for Bayesian fusion, 0.5 when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<f64>,
}

impl FusionSpec {
    pub fn fused_modalities(&self, configured: &BTreeMap<Modality, ModalityConfig>) -> Vec<Modality> {
        if let Some(w) = &self.weights {
            return w.keys().copied().collect();
        }
        match &self.modalities {
            Some(ms) => {
                let mut ms = ms.clone();
                ms.sort();
                ms.dedup();
                ms
            }
            None => configured.keys().copied().collect(),
        }
    }

    /// "0.2:0.4:0.4" for weighted strategies, "-" otherwise.
    pub fn weights_label(&self) -> String {
        match &self.weights {
            Some(w) => w.values().map(|v| format!("{v}")).collect::<Vec<_>>().join(":"),
            None => "-".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Directory of subject folders, each holding a `manifest.json`.
    pub dataset_root: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
    pub modalities: BTreeMap<Modality, ModalityConfig>,
    #[serde(default)]
    pub train: TrainSpec,
    #[serde(default)]
    pub fusion: Vec<FusionSpec>,
    /// Branch-1 EEG montage; the built-in 29-channel list when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eeg_channels: Option<Vec<String>>,
    /// When present, `run` first writes a synthetic cohort to `dataset_root`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthSpec>,
}

fn default_k() -> usize {
    5
}

/// Feature kinds the pipeline can compute from raw EEG or WAV entries.
pub fn is_derivable(kind: FeatureKind) -> bool {
    matches!(kind, FeatureKind::Handcrafted | FeatureKind::Mfcc | FeatureKind::ProsodyMfcc)
}

impl ExperimentConfig {
    /// Parses a JSON config; syntax errors and unknown names are reported as
    /// configuration errors.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// Hex SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Every problem with the config, in a stable order.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.k < 2 {
            v.push(format!("k = {} but cross-validation needs at least 2 folds", self.k));
        }
        if self.modalities.is_empty() {
            v.push("no modalities configured".into());
        }
        for (m, mc) in &self.modalities {
            let kind = mc.feature_kind;
            if kind.modality() != *m {
                v.push(format!("{m}: feature kind {} belongs to {}", kind.name(), kind.modality()));
            }
            if kind.is_raw() {
                v.push(format!("{m}: {} is a raw signal, not a feature kind", kind.name()));
            }
            if mc.encoder.kind.modality() != *m {
                v.push(format!("{m}: encoder {} is a {} encoder", mc.encoder.kind.display(), mc.encoder.kind.modality()));
            }
            if let Some(ec) = mc.encoder_config() {
                v.extend(ec.violations().into_iter().map(|s| format!("{m}: {s}")));
            }
        }
        v.extend(self.train.with_seed(self.seed).violations().into_iter().map(|s| format!("train: {s}")));
        for (i, f) in self.fusion.iter().enumerate() {
            let what = format!("fusion[{i}] ({})", f.strategy.display());
            match (&f.weights, f.strategy.uses_weights()) {
                (None, true) => v.push(format!("{what}: weights are required")),
                (Some(_), false) => v.push(format!("{what}: takes no weights")),
                (Some(w), true) => {
                    if let Err(e) = FusionWeights::new(w.clone()) {
                        v.push(format!("{what}: {e}"));
                    }
                    if f.modalities.is_some() {
                        v.push(format!("{what}: modalities are implied by the weights"));
                    }
                }
                (None, false) => {}
            }
            let fused = f.fused_modalities(&self.modalities);
            for m in &fused {
                if !self.modalities.contains_key(m) {
                    v.push(format!("{what}: modality {m} is not configured"));
                }
            }
            if fused.is_empty() {
                v.push(format!("{what}: no modalities to fuse"));
            }
            if f.strategy == FusionStrategy::MajorityVote && fused.len() < 2 {
                v.push(format!("{what}: needs at least two modalities"));
            }
            match (f.prior, f.strategy) {
                (Some(p), FusionStrategy::Bayesian) if !(p > 0.0 && p < 1.0) => {
                    v.push(format!("{what}: prior {p} outside (0, 1)"))
                }
                (Some(_), s) if s != FusionStrategy::Bayesian => v.push(format!("{what}: only Bayesian fusion takes a prior")),
                _ => {}
            }
        }
        if let Some(ch) = &self.eeg_channels {
            if ch.len() != crate::eeg::BRANCH1_CHANNELS {
                v.push(format!("eeg_channels lists {} channels, expected {}", ch.len(), crate::eeg::BRANCH1_CHANNELS));
            }
        }
        if let Some(s) = &self.synth {
            v.extend(s.violations().into_iter().map(|s| format!("synth: {s}")));
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }

    pub fn eeg_channels(&self) -> Vec<String> {
        self.eeg_channels.clone().unwrap_or_else(crate::eeg::default_branch1_channels)
    }

    /// Three modalities with small encoders, the four fusion strategies and
    /// the 0.2:0.4:0.4 weighting.
    pub fn default_trimodal(dataset_root: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        let enc = |kind| EncoderSpec { kind, hidden: 16, layers: 1, dropout: 0.1 };
        let modalities = BTreeMap::from([
            (Modality::Eeg, ModalityConfig { feature_kind: FeatureKind::Handcrafted, encoder: enc(EncoderKind::EegGruAttn) }),
            (
                Modality::Speech,
                ModalityConfig {
                    feature_kind: FeatureKind::Mfcc,
                    encoder: enc(EncoderKind::SpeechCnnPoolLstm(SpeechPool::Max)),
                },
            ),
            (Modality::Text, ModalityConfig { feature_kind: FeatureKind::Mpnet, encoder: enc(EncoderKind::TextCnn) }),
        ]);
        let weights = BTreeMap::from([(Modality::Eeg, 0.2), (Modality::Speech, 0.4), (Modality::Text, 0.4)]);
        let fusion = vec![
            FusionSpec { strategy: FusionStrategy::WeightedAverage, weights: Some(weights.clone()), modalities: None, prior: None },
            FusionSpec { strategy: FusionStrategy::SoftVote, weights: None, modalities: None, prior: None },
            FusionSpec { strategy: FusionStrategy::Bayesian, weights: Some(weights), modalities: None, prior: Some(0.5) },
            FusionSpec { strategy: FusionStrategy::MajorityVote, weights: None, modalities: None, prior: None },
        ];
        Self {
            dataset_root: dataset_root.into(),
            output_dir: output_dir.into(),
            k: default_k(),
            seed: 0,
            modalities,
            train: TrainSpec { learning_rate: 5e-3, max_epochs: 40, patience: 8, weight_decay: 1e-5, batch_size: 4 },
            fusion,
            eeg_channels: None,
            synth: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_round_trips() {
        let cfg = ExperimentConfig::default_trimodal("data", "out");
        assert!(cfg.violations().is_empty(), "{:?}", cfg.violations());
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(cfg.hash().len(), 64);
    }

    #[test]
    fn unknown_encoder_is_a_config_error() {
        let text = ExperimentConfig::default_trimodal("d", "o").to_json().replace("text_cnn", "text_transformer");
        assert!(matches!(ExperimentConfig::from_json(&text), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_field_is_rejected() {
        let text = ExperimentConfig::default_trimodal("d", "o").to_json().replacen("\"k\"", "\"folds\"", 1);
        assert!(ExperimentConfig::from_json(&text).is_err());
    }

    #[test]
    fn violations_are_exhaustive() {
        let mut cfg = ExperimentConfig::default_trimodal("d", "o");
        cfg.k = 1;
        cfg.train.batch_size = 0;
        cfg.modalities.get_mut(&Modality::Text).unwrap().encoder.kind = EncoderKind::EegCnnLstm;
        cfg.fusion[0].weights = Some(BTreeMap::from([(Modality::Eeg, 0.5), (Modality::Speech, 0.6)]));
        cfg.fusion[3].modalities = Some(vec![Modality::Eeg]);
        let v = cfg.violations();
        assert_eq!(v.len(), 5, "{v:?}");
    }

    #[test]
    fn feature_kind_must_match_modality() {
        let mut cfg = ExperimentConfig::default_trimodal("d", "o");
        cfg.modalities.get_mut(&Modality::Speech).unwrap().feature_kind = FeatureKind::Wav;
        assert_eq!(cfg.violations().len(), 1);
        cfg.modalities.get_mut(&Modality::Speech).unwrap().feature_kind = FeatureKind::Bert;
        assert_eq!(cfg.violations().len(), 1);
    }
}
