use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::encoder::ParamSet;
use super::tape::{Mat, Tape, Var};

/// Allocates parameters with uniform `±1/√fan_in` initialization.
pub(super) struct Init<'a> {
    pub rng: &'a mut ChaCha8Rng,
    pub params: &'a mut ParamSet,
}

impl Init<'_> {
    pub fn add(&mut self, name: String, rows: usize, cols: usize, fan_in: usize) -> usize {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let data = (0..rows * cols).map(|_| self.rng.gen_range(-bound..=bound)).collect();
        self.params.push(name, Mat::new(rows, cols, data))
    }
}

/// Inverted dropout with a dedicated RNG; `None` at inference.
pub(super) struct Dropout<'a> {
    pub rate: f64,
    pub rng: &'a mut ChaCha8Rng,
}

impl Dropout<'_> {
    pub fn apply(&mut self, t: &mut Tape, x: Var) -> Var {
        if self.rate <= 0.0 {
            return x;
        }
        let keep = 1.0 - self.rate;
        let n = t.value(x).len();
        let mask = (0..n).map(|_| if self.rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect();
        t.mask(x, mask)
    }
}

pub(super) fn maybe_dropout(t: &mut Tape, x: Var, dropout: &mut Option<Dropout<'_>>) -> Var {
    match dropout {
        Some(d) => d.apply(t, x),
        None => x,
    }
}

#[derive(Debug, Clone)]
pub(super) struct Linear {
    w: usize,
    b: usize,
}

impl Linear {
    pub fn new(init: &mut Init<'_>, name: &str, input: usize, output: usize) -> Self {
        Self {
            w: init.add(format!("{name}.weight"), input, output, input),
            b: init.add(format!("{name}.bias"), 1, output, input),
        }
    }

    pub fn forward(&self, t: &mut Tape, p: &[Var], x: Var) -> Var {
        let y = t.matmul(x, p[self.w]);
        t.add_row(y, p[self.b])
    }
}

/// Kernel-3, padding-1 convolution along the row axis.
#[derive(Debug, Clone)]
pub(super) struct Conv1d {
    inner: Linear,
}

impl Conv1d {
    pub fn new(init: &mut Init<'_>, name: &str, input: usize, output: usize) -> Self {
        Self {
            inner: Linear {
                w: init.add(format!("{name}.weight"), 3 * input, output, 3 * input),
                b: init.add(format!("{name}.bias"), 1, output, 3 * input),
            },
        }
    }

    pub fn forward(&self, t: &mut Tape, p: &[Var], x: Var) -> Var {
        let prev = t.shift(x, 1);
        let next = t.shift(x, -1);
        let window = t.concat_cols(&[prev, x, next]);
        self.inner.forward(t, p, window)
    }
}

/// Rows in reverse order.
fn reverse_rows(t: &mut Tape, x: Var) -> Var {
    let n = t.value(x).rows;
    let rows: Vec<Var> = (0..n).rev().map(|r| t.row(x, r)).collect();
    t.stack_rows(&rows)
}

fn zero_state(t: &mut Tape, hidden: usize) -> Var {
    t.constant(Mat::zeros(1, hidden))
}

#[derive(Debug, Clone)]
struct LstmLayer {
    w_ih: usize,
    w_hh: usize,
    b: usize,
}

/// Stacked LSTM (gate order i, f, g, o) returning the top layer's hidden
/// states for every step.
#[derive(Debug, Clone)]
pub(super) struct Lstm {
    hidden: usize,
    layers: Vec<LstmLayer>,
}

impl Lstm {
    pub fn new(init: &mut Init<'_>, name: &str, input: usize, hidden: usize, layers: usize) -> Self {
        let layers = (0..layers)
            .map(|l| {
                let inp = if l == 0 { input } else { hidden };
                LstmLayer {
                    w_ih: init.add(format!("{name}.{l}.w_ih"), inp, 4 * hidden, inp),
                    w_hh: init.add(format!("{name}.{l}.w_hh"), hidden, 4 * hidden, hidden),
                    b: init.add(format!("{name}.{l}.bias"), 1, 4 * hidden, hidden),
                }
            })
            .collect();
        Self { hidden, layers }
    }

    pub fn forward(&self, t: &mut Tape, p: &[Var], x: Var) -> Var {
        let h = self.hidden;
        let mut seq = x;
        for layer in &self.layers {
            let xw = t.matmul(seq, p[layer.w_ih]);
            let xw = t.add_row(xw, p[layer.b]);
            let steps = t.value(xw).rows;
            let mut hs = zero_state(t, h);
            let mut cs = zero_state(t, h);
            let mut outs = Vec::with_capacity(steps);
            for s in 0..steps {
                let xr = t.row(xw, s);
                let hr = t.matmul(hs, p[layer.w_hh]);
                let g = t.add(xr, hr);
                let i = t.cols(g, 0, h);
                let i = t.sigmoid(i);
                let f = t.cols(g, h, h);
                let f = t.sigmoid(f);
                let c_hat = t.cols(g, 2 * h, h);
                let c_hat = t.tanh(c_hat);
                let o = t.cols(g, 3 * h, h);
                let o = t.sigmoid(o);
                let keep = t.mul(f, cs);
                let write = t.mul(i, c_hat);
                cs = t.add(keep, write);
                let squashed = t.tanh(cs);
                hs = t.mul(o, squashed);
                outs.push(hs);
            }
            seq = t.stack_rows(&outs);
        }
        seq
    }
}

#[derive(Debug, Clone)]
struct GruLayer {
    w_ih: usize,
    b_ih: usize,
    w_hh: usize,
    b_hh: usize,
}

impl GruLayer {
    fn new(init: &mut Init<'_>, name: &str, input: usize, hidden: usize) -> Self {
        Self {
            w_ih: init.add(format!("{name}.w_ih"), input, 3 * hidden, input),
            b_ih: init.add(format!("{name}.b_ih"), 1, 3 * hidden, hidden),
            w_hh: init.add(format!("{name}.w_hh"), hidden, 3 * hidden, hidden),
            b_hh: init.add(format!("{name}.b_hh"), 1, 3 * hidden, hidden),
        }
    }

    /// Gates r, z, n:
    /// `n = tanh(x_n + r ⊙ (h W_n + b_n))`, `h' = n + z ⊙ (h − n)`.
    fn forward(&self, t: &mut Tape, p: &[Var], seq: Var, hidden: usize) -> Var {
        let h = hidden;
        let xw = t.matmul(seq, p[self.w_ih]);
        let xw = t.add_row(xw, p[self.b_ih]);
        let steps = t.value(xw).rows;
        let mut hs = zero_state(t, h);
        let mut outs = Vec::with_capacity(steps);
        for s in 0..steps {
            let xr = t.row(xw, s);
            let hw = t.matmul(hs, p[self.w_hh]);
            let hw = t.add_row(hw, p[self.b_hh]);
            let x_rz = t.cols(xr, 0, 2 * h);
            let h_rz = t.cols(hw, 0, 2 * h);
            let rz = t.add(x_rz, h_rz);
            let rz = t.sigmoid(rz);
            let r = t.cols(rz, 0, h);
            let z = t.cols(rz, h, h);
            let x_n = t.cols(xr, 2 * h, h);
            let h_n = t.cols(hw, 2 * h, h);
            let gated = t.mul(r, h_n);
            let n = t.add(x_n, gated);
            let n = t.tanh(n);
            let diff = t.sub(hs, n);
            let carry = t.mul(z, diff);
            hs = t.add(n, carry);
            outs.push(hs);
        }
        t.stack_rows(&outs)
    }
}

/// Stacked GRU; bidirectional layers concatenate forward and backward states.
#[derive(Debug, Clone)]
pub(super) struct Gru {
    hidden: usize,
    layers: Vec<(GruLayer, Option<GruLayer>)>,
}

impl Gru {
    pub fn new(init: &mut Init<'_>, name: &str, input: usize, hidden: usize, layers: usize, bidirectional: bool) -> Self {
        let width = if bidirectional { 2 * hidden } else { hidden };
        let layers = (0..layers)
            .map(|l| {
                let inp = if l == 0 { input } else { width };
                let fwd = GruLayer::new(init, &format!("{name}.{l}"), inp, hidden);
                let bwd = bidirectional.then(|| GruLayer::new(init, &format!("{name}.{l}.reverse"), inp, hidden));
                (fwd, bwd)
            })
            .collect();
        Self { hidden, layers }
    }

    pub fn output_dim(&self) -> usize {
        match self.layers.first() {
            Some((_, Some(_))) => 2 * self.hidden,
            _ => self.hidden,
        }
    }

    pub fn forward(&self, t: &mut Tape, p: &[Var], x: Var) -> Var {
        let mut seq = x;
        for (fwd, bwd) in &self.layers {
            let out = fwd.forward(t, p, seq, self.hidden);
            seq = match bwd {
                None => out,
                Some(b) => {
                    let rev_in = reverse_rows(t, seq);
                    let rev_out = b.forward(t, p, rev_in, self.hidden);
                    let back = reverse_rows(t, rev_out);
                    t.concat_cols(&[out, back])
                }
            };
        }
        seq
    }
}

/// Additive attention `score_t = vᵀ tanh(W h_t)` with softmax weights.
#[derive(Debug, Clone)]
pub(super) struct Attention {
    w: usize,
    v: usize,
}

impl Attention {
    pub fn new(init: &mut Init<'_>, name: &str, dim: usize) -> Self {
        Self {
            w: init.add(format!("{name}.w"), dim, dim, dim),
            v: init.add(format!("{name}.v"), dim, 1, dim),
        }
    }

    /// Returns `(context 1×d, weights S×1)`.
    pub fn forward(&self, t: &mut Tape, p: &[Var], states: Var) -> (Var, Var) {
        let proj = t.matmul(states, p[self.w]);
        let proj = t.tanh(proj);
        let scores = t.matmul(proj, p[self.v]);
        let alpha = t.softmax_col(scores);
        let alpha_t = t.transpose(alpha);
        (t.matmul(alpha_t, states), alpha)
    }
}

/// `Linear → ReLU → Linear` to two logits.
#[derive(Debug, Clone)]
pub(super) struct Mlp {
    hidden: Linear,
    out: Linear,
}

impl Mlp {
    pub fn new(init: &mut Init<'_>, input: usize, hidden: usize) -> Self {
        Self { hidden: Linear::new(init, "head.0", input, hidden), out: Linear::new(init, "head.1", hidden, 2) }
    }

    pub fn forward(&self, t: &mut Tape, p: &[Var], x: Var) -> Var {
        let h = self.hidden.forward(t, p, x);
        let h = t.relu(h);
        self.out.forward(t, p, h)
    }
}
