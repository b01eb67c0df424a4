//! Small trainable sequence encoders with MLP heads, a cross-entropy
//! trainer and finite-difference gradient verification.
//!
//! Every architecture maps a feature sequence (rows = segments, recordings
//! or per-recording embeddings) to a two-class posterior `(HC, MDD)`.

mod checkpoint;
mod encoder;
mod layers;
pub mod tape;
mod train;

pub use checkpoint::{load_model, save_model, CheckpointHeader, ParamShape};
pub use encoder::{Encoder, ForwardOutput, ParamSet};
pub use train::{grad_check, train, GradCheckEntry, GradCheckReport, Model, Standardizer, TrainHistory};

use serde::{Deserialize, Serialize};

use crate::store::{FeatureMatrix, Modality};
use crate::{Error, Result};

/// Two-class posterior `(p(HC), p(MDD))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    p: [f64; 2],
}

impl Posterior {
    pub fn new(p0: f64, p1: f64) -> Result<Self> {
        if !(p0 >= 0.0 && p1 >= 0.0 && (p0 + p1 - 1.0).abs() <= 1e-6) {
            return Err(Error::InvalidArgument(format!("({p0}, {p1}) is not a probability vector")));
        }
        Ok(Self { p: [p0, p1] })
    }

    /// Panics unless `p1 ∈ [0, 1]`.
    pub fn from_p1(p1: f64) -> Self {
        assert!((0.0..=1.0).contains(&p1), "p1 = {p1} is not a probability");
        Self { p: [1.0 - p1, p1] }
    }

    pub fn from_logits(z: &[f64]) -> Self {
        let p = tape::softmax(z);
        Self { p: [p[0], p[1]] }
    }

    pub fn probs(&self) -> [f64; 2] {
        self.p
    }

    pub fn p0(&self) -> f64 {
        self.p[0]
    }

    pub fn p1(&self) -> f64 {
        self.p[1]
    }

    /// Argmax, ties to MDD.
    pub fn label(&self) -> u8 {
        u8::from(self.p[1] >= self.p[0])
    }
}

/// Cross-entropy `−ln p[label]` of a posterior.
pub fn loss(p: &Posterior, label: u8) -> f64 {
    -p.probs()[label as usize].max(f64::MIN_POSITIVE).ln()
}

/// Pooling applied to each recording's segment rows in the speech encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeechPool {
    Max,
    GruAttn,
    BiGruAttn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    /// Two k=3 convolutions with dropout, stacked LSTM, last hidden state.
    EegCnnLstm,
    /// Stacked GRU with additive attention over hidden states.
    EegGruAttn,
    /// Per-recording convolution and pooling, then an LSTM over recordings.
    SpeechCnnPoolLstm(SpeechPool),
    TextLstm,
    /// One k=3 convolution, max over recordings.
    TextCnn,
}

impl EncoderKind {
    pub fn modality(self) -> Modality {
        match self {
            EncoderKind::EegCnnLstm | EncoderKind::EegGruAttn => Modality::Eeg,
            EncoderKind::SpeechCnnPoolLstm(_) => Modality::Speech,
            EncoderKind::TextLstm | EncoderKind::TextCnn => Modality::Text,
        }
    }

    pub fn display(self) -> &'static str {
        match self {
            EncoderKind::EegCnnLstm => "CNN+LSTM",
            EncoderKind::EegGruAttn => "GRU+Attention",
            EncoderKind::SpeechCnnPoolLstm(SpeechPool::Max) => "CNN+MaxPool+LSTM",
            EncoderKind::SpeechCnnPoolLstm(SpeechPool::GruAttn) => "CNN+GRU+Attention+LSTM",
            EncoderKind::SpeechCnnPoolLstm(SpeechPool::BiGruAttn) => "CNN+BiGRU+Attention+LSTM",
            EncoderKind::TextLstm => "LSTM",
            EncoderKind::TextCnn => "CNN",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub input_dim: usize,
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

impl EncoderConfig {
    pub fn new(kind: EncoderKind, input_dim: usize) -> Self {
        Self { kind, input_dim, hidden: default_hidden(), layers: default_layers(), dropout: default_dropout() }
    }

    pub fn with_hidden(self, hidden: usize) -> Self {
        Self { hidden, ..self }
    }

    pub fn with_layers(self, layers: usize) -> Self {
        Self { layers, ..self }
    }

    pub fn with_dropout(self, dropout: f64) -> Self {
        Self { dropout, ..self }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.hidden == 0 {
            v.push("encoder hidden size must be positive".into());
        }
        if self.layers == 0 {
            v.push("encoder needs at least one layer".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            v.push(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.input_dim == 0 {
            v.push("encoder input_dim must be positive".into());
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
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
}

fn default_lr() -> f64 {
    1e-3
}

fn default_max_epochs() -> usize {
    200
}

fn default_patience() -> usize {
    20
}

fn default_weight_decay() -> f64 {
    1e-5
}

fn default_batch_size() -> usize {
    8
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: default_lr(),
            max_epochs: default_max_epochs(),
            patience: default_patience(),
            seed: 0,
            weight_decay: default_weight_decay(),
            batch_size: default_batch_size(),
        }
    }
}

impl TrainConfig {
    /// A zero learning rate is accepted and leaves parameters untouched.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            v.push(format!("learning_rate {} must be a non-negative number", self.learning_rate));
        }
        if self.max_epochs == 0 {
            v.push("max_epochs must be at least 1".into());
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            v.push(format!("weight_decay {} must be non-negative", self.weight_decay));
        }
        if self.batch_size == 0 {
            v.push("batch_size must be at least 1".into());
        }
        v
    }
}

/// Feature sequence fed to an encoder. `groups` splits rows into
/// consecutive recordings for the speech encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceInput {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    pub groups: Vec<usize>,
}

impl SequenceInput {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::with_groups(rows, cols, data, vec![rows])
    }

    pub fn with_groups(rows: usize, cols: usize, data: Vec<f64>, groups: Vec<usize>) -> Result<Self> {
        if rows == 0 {
            return Err(Error::Shape("encoder input has no rows".into()));
        }
        if data.len() != rows * cols {
            return Err(Error::Shape(format!("{} values for a {rows}×{cols} input", data.len())));
        }
        if groups.iter().sum::<usize>() != rows || groups.contains(&0) {
            return Err(Error::Shape(format!("groups {groups:?} do not partition {rows} rows")));
        }
        Ok(Self { rows, cols, data, groups })
    }

    pub fn from_matrix(m: &FeatureMatrix) -> Result<Self> {
        Self::with_groups(m.rows(), m.cols(), m.data().to_vec(), m.groups().to_vec())
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}
