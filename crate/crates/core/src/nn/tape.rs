//! Reverse-mode automatic differentiation over dense row-major matrices.

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data does not match {rows}×{cols}");
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
}

/// `a (n×k) · b (k×m)`, accumulated into `out`.
fn gemm_acc(a: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let o = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let br = &b[p * m..(p + 1) * m];
            for (ov, bv) in o.iter_mut().zip(br) {
                *ov += av * bv;
            }
        }
    }
}

/// `aᵀ (k×n)ᵀ · b (n×m)` accumulated into `out` (k×m).
fn gemm_tn_acc(a: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let br = &b[i * m..(i + 1) * m];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let o = &mut out[p * m..(p + 1) * m];
            for (ov, bv) in o.iter_mut().zip(br) {
                *ov += av * bv;
            }
        }
    }
}

/// `a (n×m) · bᵀ` where `b` is k×m, accumulated into `out` (n×k).
fn gemm_nt_acc(a: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let ar = &a[i * m..(i + 1) * m];
        for p in 0..k {
            let br = &b[p * m..(p + 1) * m];
            out[i * k + p] += ar.iter().zip(br).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf(Option<usize>),
    MatMul(Var, Var),
    /// Adds a 1×c row to every row.
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    /// Elementwise multiplication by a constant (dropout masks).
    Mask(Var, Vec<f64>),
    Rows(Var, usize),
    Cols(Var, usize),
    StackRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    /// Rows shifted down by `k` (up when negative), zero filled.
    Shift(Var, isize),
    MaxRows(Var, Vec<usize>),
    /// Softmax down a single column.
    SoftmaxCol(Var),
    Transpose(Var),
    CrossEntropy(Var, usize),
}

struct Node {
    value: Mat,
    op: Op,
}

/// Records operations for one forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn param(&mut self, index: usize, value: &Mat) -> Var {
        self.push(value.clone(), Op::Leaf(Some(index)))
    }

    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf(None))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.cols, y.rows, "matmul {}×{} by {}×{}", x.rows, x.cols, y.rows, y.cols);
        let mut out = Mat::zeros(x.rows, y.cols);
        gemm_acc(&x.data, &y.data, &mut out.data, x.rows, x.cols, y.cols);
        self.push(out, Op::MatMul(a, b))
    }

    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let (x, b) = (self.value(a), self.value(bias));
        assert!(b.rows == 1 && b.cols == x.cols);
        let mut out = x.clone();
        for r in out.data.chunks_exact_mut(x.cols.max(1)) {
            r.iter_mut().zip(&b.data).for_each(|(o, bv)| *o += bv);
        }
        self.push(out, Op::AddRow(a, bias))
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!((x.rows, x.cols), (y.rows, y.cols));
        let data = x.data.iter().zip(&y.data).map(|(p, q)| f(*p, *q)).collect();
        let out = Mat::new(x.rows, x.cols, data);
        self.push(out, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |p, q| p + q, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |p, q| p - q, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |p, q| p * q, Op::Mul(a, b))
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let x = self.value(a);
        let out = Mat::new(x.rows, x.cols, x.data.iter().map(|v| f(*v)).collect());
        self.push(out, op)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, |v| v.max(0.0), Op::Relu(a))
    }

    pub fn mask(&mut self, a: Var, mask: Vec<f64>) -> Var {
        let x = self.value(a);
        assert_eq!(mask.len(), x.len());
        let out = Mat::new(x.rows, x.cols, x.data.iter().zip(&mask).map(|(v, m)| v * m).collect());
        self.push(out, Op::Mask(a, mask))
    }

    /// Rows `start..start + len`.
    pub fn rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let x = self.value(a);
        let out = Mat::new(len, x.cols, x.data[start * x.cols..(start + len) * x.cols].to_vec());
        self.push(out, Op::Rows(a, start))
    }

    pub fn row(&mut self, a: Var, r: usize) -> Var {
        self.rows(a, r, 1)
    }

    /// Columns `start..start + len`.
    pub fn cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let x = self.value(a);
        let mut data = Vec::with_capacity(x.rows * len);
        for r in 0..x.rows {
            data.extend_from_slice(&x.row(r)[start..start + len]);
        }
        let out = Mat::new(x.rows, len, data);
        self.push(out, Op::Cols(a, start))
    }

    pub fn stack_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let x = self.value(p);
            assert_eq!(x.cols, cols);
            data.extend_from_slice(&x.data);
            rows += x.rows;
        }
        self.push(Mat::new(rows, cols, data), Op::StackRows(parts.to_vec()))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                let x = self.value(p);
                assert_eq!(x.rows, rows);
                data.extend_from_slice(x.row(r));
            }
        }
        self.push(Mat::new(rows, cols, data), Op::ConcatCols(parts.to_vec()))
    }

    pub fn shift(&mut self, a: Var, k: isize) -> Var {
        let x = self.value(a);
        let mut out = Mat::zeros(x.rows, x.cols);
        for r in 0..x.rows {
            let src = r as isize - k;
            if src >= 0 && (src as usize) < x.rows {
                out.data[r * x.cols..(r + 1) * x.cols].copy_from_slice(x.row(src as usize));
            }
        }
        self.push(out, Op::Shift(a, k))
    }

    /// Column-wise maximum over rows (first maximum wins).
    pub fn max_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        assert!(x.rows > 0);
        let mut arg = vec![0; x.cols];
        let mut out = x.row(0).to_vec();
        for r in 1..x.rows {
            for (c, v) in x.row(r).iter().enumerate() {
                if *v > out[c] {
                    out[c] = *v;
                    arg[c] = r;
                }
            }
        }
        let cols = x.cols;
        self.push(Mat::new(1, cols, out), Op::MaxRows(a, arg))
    }

    pub fn softmax_col(&mut self, a: Var) -> Var {
        let x = self.value(a);
        assert_eq!(x.cols, 1);
        let out = Mat::new(x.rows, 1, softmax(&x.data));
        self.push(out, Op::SoftmaxCol(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut out = Mat::zeros(x.cols, x.rows);
        for r in 0..x.rows {
            for c in 0..x.cols {
                out.data[c * x.rows + r] = x.data[r * x.cols + c];
            }
        }
        self.push(out, Op::Transpose(a))
    }

    /// `logsumexp(z) − z[label]` for a 1×n logit row.
    pub fn cross_entropy(&mut self, logits: Var, label: usize) -> Var {
        let z = self.value(logits);
        assert!(z.rows == 1 && label < z.cols);
        let out = Mat::new(1, 1, vec![log_sum_exp(&z.data) - z.data[label]]);
        self.push(out, Op::CrossEntropy(logits, label))
    }

    /// Back-propagates from the scalar `root`, adding parameter gradients
    /// into `grads` (indexed like the leaves' parameter indices).
    pub fn backward(&self, root: Var, grads: &mut [Mat]) {
        let mut adj: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        assert_eq!(self.value(root).len(), 1, "backward needs a scalar root");
        adj[root.0] = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            let mut send = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
                let n = self.nodes[v.0].value.len();
                let slot = adj[v.0].get_or_insert_with(|| vec![0.0; n]);
                f(slot);
            };
            match &node.op {
                Op::Leaf(Some(p)) => {
                    grads[*p].data.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                }
                Op::Leaf(None) => {}
                Op::MatMul(a, b) => {
                    let (x, y) = (self.value(*a), self.value(*b));
                    send(*a, &mut |s| gemm_nt_acc(&g, &y.data, s, x.rows, x.cols, y.cols));
                    send(*b, &mut |s| gemm_tn_acc(&x.data, &g, s, x.rows, x.cols, y.cols));
                }
                Op::AddRow(a, b) => {
                    let cols = node.value.cols;
                    send(*a, &mut |s| add_into(s, &g));
                    send(*b, &mut |s| {
                        for r in g.chunks_exact(cols.max(1)) {
                            add_into(s, r);
                        }
                    });
                }
                Op::Add(a, b) => {
                    send(*a, &mut |s| add_into(s, &g));
                    send(*b, &mut |s| add_into(s, &g));
                }
                Op::Sub(a, b) => {
                    send(*a, &mut |s| add_into(s, &g));
                    send(*b, &mut |s| s.iter_mut().zip(&g).for_each(|(o, d)| *o -= d));
                }
                Op::Mul(a, b) => {
                    let (x, y) = (&self.value(*a).data, &self.value(*b).data);
                    send(*a, &mut |s| s.iter_mut().zip(&g).zip(y).for_each(|((o, d), v)| *o += d * v));
                    send(*b, &mut |s| s.iter_mut().zip(&g).zip(x).for_each(|((o, d), v)| *o += d * v));
                }
                Op::Sigmoid(a) => {
                    let y = &node.value.data;
                    send(*a, &mut |s| s.iter_mut().zip(&g).zip(y).for_each(|((o, d), v)| *o += d * v * (1.0 - v)));
                }
                Op::Tanh(a) => {
                    let y = &node.value.data;
                    send(*a, &mut |s| s.iter_mut().zip(&g).zip(y).for_each(|((o, d), v)| *o += d * (1.0 - v * v)));
                }
                Op::Relu(a) => {
                    let x = &self.value(*a).data;
                    send(*a, &mut |s| {
                        s.iter_mut().zip(&g).zip(x).for_each(|((o, d), v)| {
                            if *v > 0.0 {
                                *o += d
                            }
                        })
                    });
                }
                Op::Mask(a, m) => {
                    send(*a, &mut |s| s.iter_mut().zip(&g).zip(m).for_each(|((o, d), v)| *o += d * v));
                }
                Op::Rows(a, start) => {
                    let cols = node.value.cols;
                    send(*a, &mut |s| add_into(&mut s[start * cols..start * cols + g.len()], &g));
                }
                Op::Cols(a, start) => {
                    let (src_cols, len) = (self.value(*a).cols, node.value.cols);
                    send(*a, &mut |s| {
                        for (r, gr) in g.chunks_exact(len.max(1)).enumerate() {
                            add_into(&mut s[r * src_cols + start..r * src_cols + start + len], gr);
                        }
                    });
                }
                Op::StackRows(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let n = self.value(*p).len();
                        send(*p, &mut |s| add_into(s, &g[off..off + n]));
                        off += n;
                    }
                }
                Op::ConcatCols(parts) => {
                    let total = node.value.cols;
                    let mut off = 0;
                    for p in parts {
                        let c = self.value(*p).cols;
                        send(*p, &mut |s| {
                            for (r, sr) in s.chunks_exact_mut(c.max(1)).enumerate() {
                                add_into(sr, &g[r * total + off..r * total + off + c]);
                            }
                        });
                        off += c;
                    }
                }
                Op::Shift(a, k) => {
                    let (rows, cols) = (node.value.rows, node.value.cols);
                    send(*a, &mut |s| {
                        for r in 0..rows {
                            let src = r as isize - k;
                            if src >= 0 && (src as usize) < rows {
                                let src = src as usize;
                                add_into(&mut s[src * cols..(src + 1) * cols], &g[r * cols..(r + 1) * cols]);
                            }
                        }
                    });
                }
                Op::MaxRows(a, arg) => {
                    let cols = node.value.cols;
                    send(*a, &mut |s| {
                        for (c, r) in arg.iter().enumerate() {
                            s[r * cols + c] += g[c];
                        }
                    });
                }
                Op::SoftmaxCol(a) => {
                    let y = &node.value.data;
                    let dot: f64 = g.iter().zip(y).map(|(d, v)| d * v).sum();
                    send(*a, &mut |s| s.iter_mut().zip(&g).zip(y).for_each(|((o, d), v)| *o += v * (d - dot)));
                }
                Op::Transpose(a) => {
                    let (rows, cols) = (self.value(*a).rows, self.value(*a).cols);
                    send(*a, &mut |s| {
                        for r in 0..rows {
                            for c in 0..cols {
                                s[r * cols + c] += g[c * rows + r];
                            }
                        }
                    });
                }
                Op::CrossEntropy(a, label) => {
                    let p = softmax(&self.value(*a).data);
                    send(*a, &mut |s| {
                        for (j, (o, pj)) in s.iter_mut().zip(&p).enumerate() {
                            *o += g[0] * (pj - if j == *label { 1.0 } else { 0.0 });
                        }
                    });
                }
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}
