//! A small reverse-mode automatic differentiation tape over dense `f64`
//! matrices. Sequences are laid out time-major: row `t * batch + b` holds
//! item `b` at step `t`.

use std::collections::HashMap;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, Axis};

pub type Mat = Array2<f64>;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Per-batch statistics recorded by a training-mode batch norm node.
#[derive(Debug, Clone)]
pub struct BatchNormStats {
    pub mean: Vec<f64>,
    /// Unbiased variance over the valid rows.
    pub variance: Vec<f64>,
}

enum Op {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    MulConst(Var, Mat),
    ScaleRows(Var, Vec<f64>),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize, usize),
    SliceRows(Var, usize, usize),
    GatherRows(Var, Vec<Option<usize>>),
    LstmGates {
        pre: Var,
        c_prev: Var,
        /// `[i | f | g | o | tanh(c)]`, each `B x H`.
        cache: Mat,
    },
    MaskedUpdate {
        prev: Var,
        new: Var,
        mask: Vec<f64>,
    },
    BatchNorm {
        x: Var,
        valid: Vec<bool>,
        inv_std: Vec<f64>,
        count: usize,
        stats: BatchNormStats,
    },
    Attention {
        keys: Var,
        values: Var,
        query: Var,
        enc_batch: usize,
        src_of: Vec<usize>,
        /// `queries x T'` softmax weights (zero past each source length).
        weights: Mat,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<Option<usize>>,
        probs: Mat,
    },
}

struct Node {
    value: Option<Mat>,
    op: Op,
}

/// Records operations for one forward pass over a borrowed parameter list.
pub struct Tape<'p> {
    params: &'p [Mat],
    nodes: Vec<Node>,
    param_nodes: HashMap<usize, Var>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p [Mat]) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(m), _) => m,
            (None, Op::Param(i)) => &self.params[*i],
            _ => unreachable!("only parameter nodes borrow their value"),
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).dim()
    }

    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Node for parameter `index`; repeated calls return the same node.
    pub fn param(&mut self, index: usize) -> Var {
        if let Some(&v) = self.param_nodes.get(&index) {
            return v;
        }
        assert!(index < self.params.len(), "parameter index out of range");
        self.nodes.push(Node {
            value: None,
            op: Op::Param(index),
        });
        let v = Var(self.nodes.len() - 1);
        self.param_nodes.insert(index, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).dot(self.value(b));
        self.push(out, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a) + self.value(b);
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a) - self.value(b);
        self.push(out, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a) * self.value(b);
        self.push(out, Op::Mul(a, b))
    }

    /// `a + row` with `row` of shape `1 x cols` broadcast over rows.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        assert_eq!(self.shape(row).0, 1);
        let out = self.value(a) + self.value(row);
        self.push(out, Op::AddRow(a, row))
    }

    /// `a * row` with `row` of shape `1 x cols` broadcast over rows.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        assert_eq!(self.shape(row).0, 1);
        let out = self.value(a) * self.value(row);
        self.push(out, Op::MulRow(a, row))
    }

    /// Elementwise product with a constant (e.g. a dropout mask).
    pub fn mul_const(&mut self, a: Var, c: Mat) -> Var {
        let out = self.value(a) * &c;
        self.push(out, Op::MulConst(a, c))
    }

    /// Multiplies row `r` by `scales[r]`.
    pub fn scale_rows(&mut self, a: Var, scales: Vec<f64>) -> Var {
        let mut out = self.value(a).clone();
        for (mut row, &s) in out.rows_mut().into_iter().zip(&scales) {
            row *= s;
        }
        self.push(out, Op::ScaleRows(a, scales))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|x| x.max(0.0));
        self.push(out, Op::Relu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<ArrayView2<f64>> = parts.iter().map(|&p| self.value(p).view()).collect();
        let out = ndarray::concatenate(Axis(1), &views).expect("row counts must agree");
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<ArrayView2<f64>> = parts.iter().map(|&p| self.value(p).view()).collect();
        let out = ndarray::concatenate(Axis(0), &views).expect("column counts must agree");
        self.push(out, Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let out = self.value(a).slice(s![.., start..end]).to_owned();
        self.push(out, Op::SliceCols(a, start, end))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let out = self.value(a).slice(s![start..end, ..]).to_owned();
        self.push(out, Op::SliceRows(a, start, end))
    }

    /// Row `i` of the output is row `rows[i]` of `a`, or zeros for `None`.
    pub fn gather_rows(&mut self, a: Var, rows: Vec<Option<usize>>) -> Var {
        let src = self.value(a);
        let mut out = Mat::zeros((rows.len(), src.ncols()));
        for (i, r) in rows.iter().enumerate() {
            if let Some(r) = *r {
                out.row_mut(i).assign(&src.row(r));
            }
        }
        self.push(out, Op::GatherRows(a, rows))
    }

    /// LSTM cell nonlinearity. `pre` holds `[i f g o]` pre-activations
    /// (`B x 4H`); returns `[h | c]` (`B x 2H`).
    pub fn lstm_gates(&mut self, pre: Var, c_prev: Var) -> Var {
        let p = self.value(pre);
        let cp = self.value(c_prev);
        let (b, h4) = p.dim();
        let h = h4 / 4;
        assert_eq!(cp.dim(), (b, h));
        let mut cache = Mat::zeros((b, 5 * h));
        let mut out = Mat::zeros((b, 2 * h));
        for r in 0..b {
            for k in 0..h {
                let i = sigmoid(p[[r, k]]);
                let f = sigmoid(p[[r, h + k]]);
                let g = p[[r, 2 * h + k]].tanh();
                let o = sigmoid(p[[r, 3 * h + k]]);
                let c = f * cp[[r, k]] + i * g;
                let tc = c.tanh();
                cache[[r, k]] = i;
                cache[[r, h + k]] = f;
                cache[[r, 2 * h + k]] = g;
                cache[[r, 3 * h + k]] = o;
                cache[[r, 4 * h + k]] = tc;
                out[[r, k]] = o * tc;
                out[[r, h + k]] = c;
            }
        }
        self.push(out, Op::LstmGates { pre, c_prev, cache })
    }

    /// Per-row carry: `prev + mask[r] * (new - prev)`.
    pub fn masked_update(&mut self, prev: Var, new: Var, mask: Vec<f64>) -> Var {
        let mut out = self.value(prev).clone();
        let nv = self.value(new);
        for (r, &m) in mask.iter().enumerate() {
            if m != 0.0 {
                let mut row = out.row_mut(r);
                row.zip_mut_with(&nv.row(r), |o, &n| *o += m * (n - *o));
            }
        }
        self.push(out, Op::MaskedUpdate { prev, new, mask })
    }

    /// Standardizes each column using statistics over the valid rows only.
    /// Invalid rows come out as zeros.
    pub fn batch_norm(&mut self, x: Var, valid: Vec<bool>, eps: f64) -> Var {
        let xv = self.value(x);
        let (n, c) = xv.dim();
        let count = valid.iter().filter(|&&v| v).count().max(1);
        let mut mean = vec![0.0; c];
        for r in (0..n).filter(|&r| valid[r]) {
            for k in 0..c {
                mean[k] += xv[[r, k]];
            }
        }
        mean.iter_mut().for_each(|m| *m /= count as f64);
        let mut var = vec![0.0; c];
        for r in (0..n).filter(|&r| valid[r]) {
            for k in 0..c {
                var[k] += (xv[[r, k]] - mean[k]).powi(2);
            }
        }
        let unbiased: Vec<f64> = var.iter().map(|v| v / (count.max(2) - 1) as f64).collect();
        var.iter_mut().for_each(|v| *v /= count as f64);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mut out = Mat::zeros((n, c));
        for r in (0..n).filter(|&r| valid[r]) {
            for k in 0..c {
                out[[r, k]] = (xv[[r, k]] - mean[k]) * inv_std[k];
            }
        }
        let stats = BatchNormStats {
            mean,
            variance: unbiased,
        };
        self.push(
            out,
            Op::BatchNorm {
                x,
                valid,
                inv_std,
                count,
                stats,
            },
        )
    }

    /// Statistics recorded by a [`Tape::batch_norm`] node.
    pub fn batch_norm_stats(&self, v: Var) -> Option<&BatchNormStats> {
        match &self.nodes[v.0].op {
            Op::BatchNorm { stats, .. } => Some(stats),
            _ => None,
        }
    }

    /// Bilinear-style dot-product attention. `keys` and `values` are
    /// time-major over `enc_batch` items; query row `q` attends to the
    /// first `lens[src_of[q]]` steps of encoder item `src_of[q]`.
    /// Returns the `queries x Hv` context.
    pub fn attention(
        &mut self,
        keys: Var,
        values: Var,
        query: Var,
        enc_batch: usize,
        src_of: Vec<usize>,
        lens: &[usize],
    ) -> Var {
        let kv = self.value(keys);
        let vv = self.value(values);
        let qv = self.value(query);
        let t_max = kv.nrows() / enc_batch;
        let n_q = qv.nrows();
        assert_eq!(src_of.len(), n_q);
        let mut weights = Mat::zeros((n_q, t_max));
        let mut ctx = Mat::zeros((n_q, vv.ncols()));
        for q in 0..n_q {
            let b = src_of[q];
            let len = lens[b];
            assert!(len >= 1 && len <= t_max, "attention over an empty source");
            let scores: Vec<f64> = (0..len)
                .map(|t| kv.row(t * enc_batch + b).dot(&qv.row(q)))
                .collect();
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            for t in 0..len {
                let w = exps[t] / z;
                weights[[q, t]] = w;
                ctx.row_mut(q).scaled_add(w, &vv.row(t * enc_batch + b));
            }
        }
        self.push(
            ctx,
            Op::Attention {
                keys,
                values,
                query,
                enc_batch,
                src_of,
                weights,
            },
        )
    }

    /// Attention weights recorded by a [`Tape::attention`] node.
    pub fn attention_weights(&self, v: Var) -> Option<&Mat> {
        match &self.nodes[v.0].op {
            Op::Attention { weights, .. } => Some(weights),
            _ => None,
        }
    }

    /// Summed negative log-likelihood of `targets` under row-wise softmax of
    /// `logits`; rows with `None` are ignored. Returns a `1 x 1` node.
    pub fn cross_entropy(&mut self, logits: Var, targets: Vec<Option<usize>>) -> Var {
        let lv = self.value(logits);
        let mut probs = Mat::zeros(lv.dim());
        let mut total = 0.0;
        for (r, target) in targets.iter().enumerate() {
            let row = lv.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|x| (x - max).exp()).sum();
            let log_z = max + z.ln();
            for (k, &x) in row.iter().enumerate() {
                probs[[r, k]] = (x - log_z).exp();
            }
            if let Some(t) = *target {
                total += log_z - row[t];
            }
        }
        self.push(
            Mat::from_elem((1, 1), total),
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            },
        )
    }

    /// Softmax probabilities cached by a [`Tape::cross_entropy`] node.
    pub fn cross_entropy_probs(&self, v: Var) -> Option<&Mat> {
        match &self.nodes[v.0].op {
            Op::CrossEntropy { probs, .. } => Some(probs),
            _ => None,
        }
    }

    /// Reverse pass from the scalar node `loss` scaled by `seed`. Returns one
    /// gradient per parameter (zeros for parameters not on the tape).
    pub fn backward(&self, loss: Var, seed: f64) -> Vec<Mat> {
        assert_eq!(self.shape(loss), (1, 1), "backward needs a scalar");
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Mat::from_elem((1, 1), seed));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Param(_) => {
                    grads[i] = Some(g);
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let ga = self.grad_buf(&mut grads, *a);
                    general_mat_mul(1.0, &g, &bv.t(), 1.0, ga);
                    let gb = self.grad_buf(&mut grads, *b);
                    general_mat_mul(1.0, &av.t(), &g, 1.0, gb);
                }
                Op::Add(a, b) => {
                    *self.grad_buf(&mut grads, *a) += &g;
                    *self.grad_buf(&mut grads, *b) += &g;
                }
                Op::Sub(a, b) => {
                    *self.grad_buf(&mut grads, *a) += &g;
                    *self.grad_buf(&mut grads, *b) -= &g;
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    *self.grad_buf(&mut grads, *a) += &(&g * bv);
                    *self.grad_buf(&mut grads, *b) += &(&g * av);
                }
                Op::AddRow(a, row) => {
                    *self.grad_buf(&mut grads, *a) += &g;
                    *self.grad_buf(&mut grads, *row) += &g.sum_axis(Axis(0)).insert_axis(Axis(0));
                }
                Op::MulRow(a, row) => {
                    let (av, rv) = (self.value(*a), self.value(*row));
                    *self.grad_buf(&mut grads, *a) += &(&g * rv);
                    let gr = (&g * av).sum_axis(Axis(0)).insert_axis(Axis(0));
                    *self.grad_buf(&mut grads, *row) += &gr;
                }
                Op::MulConst(a, c) => {
                    *self.grad_buf(&mut grads, *a) += &(&g * c);
                }
                Op::ScaleRows(a, scales) => {
                    let ga = self.grad_buf(&mut grads, *a);
                    for (r, &s) in scales.iter().enumerate() {
                        ga.row_mut(r).scaled_add(s, &g.row(r));
                    }
                }
                Op::Relu(a) => {
                    let out = node.value.as_ref().unwrap();
                    let ga = self.grad_buf(&mut grads, *a);
                    ndarray::Zip::from(ga)
                        .and(&g)
                        .and(out)
                        .for_each(|ga, &g, &o| {
                            if o > 0.0 {
                                *ga += g;
                            }
                        });
                }
                Op::Tanh(a) => {
                    let out = node.value.as_ref().unwrap();
                    let ga = self.grad_buf(&mut grads, *a);
                    ndarray::Zip::from(ga)
                        .and(&g)
                        .and(out)
                        .for_each(|ga, &g, &o| *ga += g * (1.0 - o * o));
                }
                Op::Sigmoid(a) => {
                    let out = node.value.as_ref().unwrap();
                    let ga = self.grad_buf(&mut grads, *a);
                    ndarray::Zip::from(ga)
                        .and(&g)
                        .and(out)
                        .for_each(|ga, &g, &o| *ga += g * o * (1.0 - o));
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let w = self.shape(p).1;
                        *self.grad_buf(&mut grads, p) += &g.slice(s![.., start..start + w]);
                        start += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let h = self.shape(p).0;
                        *self.grad_buf(&mut grads, p) += &g.slice(s![start..start + h, ..]);
                        start += h;
                    }
                }
                Op::SliceCols(a, start, end) => {
                    let mut ga = self
                        .grad_buf(&mut grads, *a)
                        .slice_mut(s![.., *start..*end]);
                    ga += &g;
                }
                Op::SliceRows(a, start, end) => {
                    let mut ga = self
                        .grad_buf(&mut grads, *a)
                        .slice_mut(s![*start..*end, ..]);
                    ga += &g;
                }
                Op::GatherRows(a, rows) => {
                    let ga = self.grad_buf(&mut grads, *a);
                    for (i, r) in rows.iter().enumerate() {
                        if let Some(r) = *r {
                            let mut dst = ga.row_mut(r);
                            dst += &g.row(i);
                        }
                    }
                }
                Op::LstmGates { pre, c_prev, cache } => {
                    let cp = self.value(*c_prev);
                    let (b, h2) = g.dim();
                    let h = h2 / 2;
                    let mut gpre = Mat::zeros((b, 4 * h));
                    let mut gcp = Mat::zeros((b, h));
                    for r in 0..b {
                        for k in 0..h {
                            let i = cache[[r, k]];
                            let f = cache[[r, h + k]];
                            let gg = cache[[r, 2 * h + k]];
                            let o = cache[[r, 3 * h + k]];
                            let tc = cache[[r, 4 * h + k]];
                            let dh = g[[r, k]];
                            let dc = g[[r, h + k]] + dh * o * (1.0 - tc * tc);
                            gpre[[r, k]] = dc * gg * i * (1.0 - i);
                            gpre[[r, h + k]] = dc * cp[[r, k]] * f * (1.0 - f);
                            gpre[[r, 2 * h + k]] = dc * i * (1.0 - gg * gg);
                            gpre[[r, 3 * h + k]] = dh * tc * o * (1.0 - o);
                            gcp[[r, k]] = dc * f;
                        }
                    }
                    *self.grad_buf(&mut grads, *pre) += &gpre;
                    *self.grad_buf(&mut grads, *c_prev) += &gcp;
                }
                Op::MaskedUpdate { prev, new, mask } => {
                    {
                        let gp = self.grad_buf(&mut grads, *prev);
                        for (r, &m) in mask.iter().enumerate() {
                            gp.row_mut(r).scaled_add(1.0 - m, &g.row(r));
                        }
                    }
                    let gn = self.grad_buf(&mut grads, *new);
                    for (r, &m) in mask.iter().enumerate() {
                        gn.row_mut(r).scaled_add(m, &g.row(r));
                    }
                }
                Op::BatchNorm {
                    x,
                    valid,
                    inv_std,
                    count,
                    ..
                } => {
                    let xhat = node.value.as_ref().unwrap();
                    let c = xhat.ncols();
                    let n = *count as f64;
                    let mut sum_g = vec![0.0; c];
                    let mut sum_gx = vec![0.0; c];
                    for r in (0..xhat.nrows()).filter(|&r| valid[r]) {
                        for k in 0..c {
                            sum_g[k] += g[[r, k]];
                            sum_gx[k] += g[[r, k]] * xhat[[r, k]];
                        }
                    }
                    let gx = self.grad_buf(&mut grads, *x);
                    for r in (0..xhat.nrows()).filter(|&r| valid[r]) {
                        for k in 0..c {
                            gx[[r, k]] += inv_std[k] / n
                                * (n * g[[r, k]] - sum_g[k] - xhat[[r, k]] * sum_gx[k]);
                        }
                    }
                }
                Op::Attention {
                    keys,
                    values,
                    query,
                    enc_batch,
                    src_of,
                    weights,
                } => {
                    let (kv, vv, qv) = (self.value(*keys), self.value(*values), self.value(*query));
                    let n_q = qv.nrows();
                    let mut d_scores = Mat::zeros(weights.dim());
                    {
                        let gv = self.grad_buf(&mut grads, *values);
                        for q in 0..n_q {
                            let b = src_of[q];
                            let mut dot_sum = 0.0;
                            let mut d_alpha = Vec::new();
                            for t in 0..weights.ncols() {
                                let w = weights[[q, t]];
                                if w == 0.0 {
                                    d_alpha.push(0.0);
                                    continue;
                                }
                                let row = t * enc_batch + b;
                                gv.row_mut(row).scaled_add(w, &g.row(q));
                                let da = vv.row(row).dot(&g.row(q));
                                dot_sum += w * da;
                                d_alpha.push(da);
                            }
                            for t in 0..weights.ncols() {
                                d_scores[[q, t]] = weights[[q, t]] * (d_alpha[t] - dot_sum);
                            }
                        }
                    }
                    {
                        let gk = self.grad_buf(&mut grads, *keys);
                        for q in 0..n_q {
                            let b = src_of[q];
                            for t in 0..weights.ncols() {
                                let ds = d_scores[[q, t]];
                                if ds != 0.0 {
                                    gk.row_mut(t * enc_batch + b).scaled_add(ds, &qv.row(q));
                                }
                            }
                        }
                    }
                    let gq = self.grad_buf(&mut grads, *query);
                    for q in 0..n_q {
                        let b = src_of[q];
                        for t in 0..weights.ncols() {
                            let ds = d_scores[[q, t]];
                            if ds != 0.0 {
                                gq.row_mut(q).scaled_add(ds, &kv.row(t * enc_batch + b));
                            }
                        }
                    }
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    probs,
                } => {
                    let scale = g[[0, 0]];
                    let gl = self.grad_buf(&mut grads, *logits);
                    for (r, target) in targets.iter().enumerate() {
                        if let Some(t) = *target {
                            gl.row_mut(r).scaled_add(scale, &probs.row(r));
                            gl[[r, t]] -= scale;
                        }
                    }
                }
            }
        }

        let mut out: Vec<Mat> = self.params.iter().map(|p| Mat::zeros(p.dim())).collect();
        for (&index, &v) in &self.param_nodes {
            if let Some(g) = grads[v.0].take() {
                out[index] = g;
            }
        }
        out
    }

    fn grad_buf<'g>(&self, grads: &'g mut [Option<Mat>], v: Var) -> &'g mut Mat {
        let shape = self.shape(v);
        grads[v.0].get_or_insert_with(|| Mat::zeros(shape))
    }
}
