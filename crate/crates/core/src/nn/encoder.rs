use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{maybe_dropout, Attention, Conv1d, Dropout, Gru, Init, Lstm, Mlp};
use super::tape::{Mat, Tape, Var};
use super::{EncoderConfig, EncoderKind, Posterior, SequenceInput, SpeechPool};
use crate::{Error, Result};

/// Named parameter matrices in construction order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    names: Vec<String>,
    mats: Vec<Mat>,
}

impl ParamSet {
    pub(super) fn push(&mut self, name: String, m: Mat) -> usize {
        self.names.push(name);
        self.mats.push(m);
        self.mats.len() - 1
    }

    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn mats(&self) -> &[Mat] {
        &self.mats
    }

    pub fn mats_mut(&mut self) -> &mut [Mat] {
        &mut self.mats
    }

    pub fn num_values(&self) -> usize {
        self.mats.iter().map(Mat::len).sum()
    }

    pub fn zeros_like(&self) -> Vec<Mat> {
        self.mats.iter().map(|m| Mat::zeros(m.rows, m.cols)).collect()
    }

    /// All values flattened in order.
    pub fn flatten(&self) -> Vec<f64> {
        self.mats.iter().flat_map(|m| m.data.iter().copied()).collect()
    }
}

#[derive(Debug, Clone)]
enum Pool {
    Max,
    Attn(Gru, Attention),
}

#[derive(Debug, Clone)]
enum Body {
    CnnLstm { conv1: Conv1d, conv2: Conv1d, lstm: Lstm },
    GruAttn { gru: Gru, attn: Attention },
    SpeechPool { conv: Conv1d, readout: usize, pool: Pool, lstm: Lstm },
    Lstm(Lstm),
    Cnn(Conv1d),
}

/// Architecture wiring for one [`EncoderConfig`]; parameters live in a
/// separate [`ParamSet`].
#[derive(Debug, Clone)]
pub struct Encoder {
    config: EncoderConfig,
    body: Body,
    head: Mlp,
}

pub(super) struct Trace {
    pub logits: Var,
    pub latent: Var,
    pub attention: Option<Var>,
    pub recordings: Option<Var>,
}

/// Result of an inference pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// Representation fed to the MLP head.
    pub latent: Vec<f64>,
    pub logits: [f64; 2],
    pub posterior: Posterior,
    /// Attention weights over rows (GRU+attention EEG encoder).
    pub attention: Option<Vec<f64>>,
    /// One pooled vector per recording (speech encoder).
    pub recording_vectors: Option<Mat>,
}

impl Encoder {
    /// Builds the architecture with parameters drawn from `seed`.
    pub fn new(config: EncoderConfig, seed: u64) -> Result<(Self, ParamSet)> {
        config.validate()?;
        Ok(Self::build(config, &mut ChaCha8Rng::seed_from_u64(seed)))
    }

    pub(super) fn build(config: EncoderConfig, rng: &mut ChaCha8Rng) -> (Self, ParamSet) {
        let mut params = ParamSet::default();
        let mut init = Init { rng, params: &mut params };
        let (d, h, l) = (config.input_dim, config.hidden, config.layers);
        let (body, latent) = match config.kind {
            EncoderKind::EegCnnLstm => (
                Body::CnnLstm {
                    conv1: Conv1d::new(&mut init, "conv.0", d, h),
                    conv2: Conv1d::new(&mut init, "conv.1", h, h),
                    lstm: Lstm::new(&mut init, "lstm", h, h, l),
                },
                h,
            ),
            EncoderKind::EegGruAttn => {
                let gru = Gru::new(&mut init, "gru", d, h, l, false);
                let attn = Attention::new(&mut init, "attn", h);
                (Body::GruAttn { gru, attn }, h)
            }
            EncoderKind::SpeechCnnPoolLstm(kind) => {
                let conv = Conv1d::new(&mut init, "conv", 1, h);
                let readout = init.add("readout".into(), d, h, d);
                let pool = match kind {
                    SpeechPool::Max => Pool::Max,
                    SpeechPool::GruAttn | SpeechPool::BiGruAttn => {
                        let gru = Gru::new(&mut init, "pool.gru", h, h, 1, kind == SpeechPool::BiGruAttn);
                        let attn = Attention::new(&mut init, "pool.attn", gru.output_dim());
                        Pool::Attn(gru, attn)
                    }
                };
                let width = match &pool {
                    Pool::Max => h,
                    Pool::Attn(g, _) => g.output_dim(),
                };
                let lstm = Lstm::new(&mut init, "lstm", width, h, l);
                (Body::SpeechPool { conv, readout, pool, lstm }, h)
            }
            EncoderKind::TextLstm => (Body::Lstm(Lstm::new(&mut init, "lstm", d, h, l)), h),
            EncoderKind::TextCnn => (Body::Cnn(Conv1d::new(&mut init, "conv", d, h)), h),
        };
        let head = Mlp::new(&mut init, latent, h);
        (Self { config, body, head }, params)
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub(super) fn check_input(&self, x: &SequenceInput) -> Result<()> {
        if x.cols != self.config.input_dim {
            return Err(Error::Shape(format!(
                "encoder expects {} features per row, got {}",
                self.config.input_dim, x.cols
            )));
        }
        if x.rows == 0 {
            return Err(Error::Shape("encoder input has no rows".into()));
        }
        Ok(())
    }

    pub(super) fn trace(
        &self,
        t: &mut Tape,
        params: &ParamSet,
        x: &SequenceInput,
        mut dropout: Option<Dropout<'_>>,
    ) -> Result<Trace> {
        self.check_input(x)?;
        let p: Vec<Var> = params.mats().iter().enumerate().map(|(i, m)| t.param(i, m)).collect();
        let input = t.constant(Mat::new(x.rows, x.cols, x.data.clone()));
        let mut attention = None;
        let mut recordings = None;
        let latent = match &self.body {
            Body::CnnLstm { conv1, conv2, lstm } => {
                let a = conv1.forward(t, &p, input);
                let a = t.relu(a);
                let a = maybe_dropout(t, a, &mut dropout);
                let a = conv2.forward(t, &p, a);
                let a = t.relu(a);
                let a = maybe_dropout(t, a, &mut dropout);
                let h = lstm.forward(t, &p, a);
                last_row(t, h)
            }
            Body::GruAttn { gru, attn } => {
                let states = gru.forward(t, &p, input);
                let (ctx, alpha) = attn.forward(t, &p, states);
                attention = Some(alpha);
                ctx
            }
            Body::SpeechPool { conv, readout, pool, lstm } => {
                let mut vectors = Vec::with_capacity(x.groups.len());
                let mut start = 0;
                for &n in &x.groups {
                    // each segment row is convolved along its feature axis
                    // and read out with per-position weights, so rows stay
                    // independent of each other
                    let ones = t.constant(Mat::new(1, x.cols, vec![1.0; x.cols]));
                    let segs: Vec<Var> = (start..start + n)
                        .map(|r| {
                            let row = t.row(input, r);
                            let col = t.transpose(row);
                            let a = conv.forward(t, &p, col);
                            let a = t.relu(a);
                            let a = t.mul(a, p[*readout]);
                            t.matmul(ones, a)
                        })
                        .collect();
                    start += n;
                    let a = t.stack_rows(&segs);
                    let a = maybe_dropout(t, a, &mut dropout);
                    vectors.push(match pool {
                        Pool::Max => t.max_rows(a),
                        Pool::Attn(gru, attn) => {
                            let states = gru.forward(t, &p, a);
                            attn.forward(t, &p, states).0
                        }
                    });
                }
                let stacked = t.stack_rows(&vectors);
                recordings = Some(stacked);
                let h = lstm.forward(t, &p, stacked);
                last_row(t, h)
            }
            Body::Lstm(lstm) => {
                let h = lstm.forward(t, &p, input);
                last_row(t, h)
            }
            Body::Cnn(conv) => {
                let a = conv.forward(t, &p, input);
                let a = t.relu(a);
                let a = maybe_dropout(t, a, &mut dropout);
                t.max_rows(a)
            }
        };
        let dropped = maybe_dropout(t, latent, &mut dropout);
        let logits = self.head.forward(t, &p, dropped);
        Ok(Trace { logits, latent, attention, recordings })
    }

    /// Inference pass (dropout off).
    pub fn forward(&self, params: &ParamSet, x: &SequenceInput) -> Result<ForwardOutput> {
        let mut t = Tape::new();
        let tr = self.trace(&mut t, params, x, None)?;
        let z = &t.value(tr.logits).data;
        let logits = [z[0], z[1]];
        Ok(ForwardOutput {
            latent: t.value(tr.latent).data.clone(),
            logits,
            posterior: Posterior::from_logits(&logits),
            attention: tr.attention.map(|a| t.value(a).data.clone()),
            recording_vectors: tr.recordings.map(|r| t.value(r).clone()),
        })
    }

    /// Cross-entropy of the inference pass, from the logits.
    pub fn loss(&self, params: &ParamSet, x: &SequenceInput, label: u8) -> Result<f64> {
        let mut t = Tape::new();
        let tr = self.trace(&mut t, params, x, None)?;
        let l = t.cross_entropy(tr.logits, label as usize);
        Ok(t.value(l).data[0])
    }

    /// Loss and its gradient with respect to every parameter.
    pub fn gradient(&self, params: &ParamSet, x: &SequenceInput, label: u8) -> Result<(f64, Vec<Mat>)> {
        let mut grads = params.zeros_like();
        let loss = self.accumulate(params, x, label, None, &mut grads)?;
        Ok((loss, grads))
    }

    pub(super) fn accumulate(
        &self,
        params: &ParamSet,
        x: &SequenceInput,
        label: u8,
        dropout: Option<Dropout<'_>>,
        grads: &mut [Mat],
    ) -> Result<f64> {
        let mut t = Tape::new();
        let tr = self.trace(&mut t, params, x, dropout)?;
        let l = t.cross_entropy(tr.logits, label as usize);
        t.backward(l, grads);
        Ok(t.value(l).data[0])
    }
}

fn last_row(t: &mut Tape, seq: Var) -> Var {
    let n = t.value(seq).rows;
    t.row(seq, n - 1)
}
