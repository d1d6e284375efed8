use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AutodiffError, ParamId, ParamStore, Scalar, Tensor};
use super::tensor::gemm;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

/// Padded batch of sequences: row `b * max_len + t` of a sequence tensor
/// holds step `t` of sequence `b`; rows with `t >= lengths[b]` are padding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeqLayout {
    pub max_len: usize,
    pub lengths: Vec<usize>,
}

impl SeqLayout {
    pub fn new(lengths: Vec<usize>) -> Self {
        let max_len = lengths.iter().copied().max().unwrap_or(0).max(1);
        Self { max_len, lengths }
    }

    pub fn batch(&self) -> usize {
        self.lengths.len()
    }

    pub fn rows(&self) -> usize {
        self.batch() * self.max_len
    }

    /// Per-row validity of step `t` across the batch.
    pub fn active_at(&self, t: usize) -> Vec<bool> {
        self.lengths.iter().map(|&l| t < l).collect()
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Op<T> {
    Input,
    Param,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    Concat { inputs: Vec<Var>, axis: usize },
    SliceCols { x: Var, start: usize },
    Reshape(Var),
    Embedding { table: Var, indices: Vec<Option<usize>> },
    Conv1d { x: Var, w: Var, b: Var, seq: SeqLayout, width: usize, cols: Tensor<T> },
    MaxPoolTime { x: Var, argmax: Vec<usize> },
    TimeStep { x: Var, max_len: usize, t: usize },
    ReverseSeq { x: Var, seq: SeqLayout },
    WhereRows { mask: Vec<bool>, a: Var, b: Var },
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Softmax(Var),
    Dropout { x: Var, mask: Vec<T> },
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Tensor<T>, inv_std: Vec<T>, train: bool },
    CrossEntropy { logits: Var, targets: Vec<usize>, probs: Tensor<T>, weights: Vec<T> },
    BceLogits { logits: Var, targets: Vec<T>, weights: Vec<T> },
    Mse { pred: Var, targets: Vec<T> },
    Sum(Var),
    WeightedSum(Vec<(Var, f64)>),
}

pub(crate) struct Node<T> {
    pub(crate) value: Tensor<T>,
    pub(crate) op: Op<T>,
    pub(crate) requires_grad: bool,
}

/// Define-by-run computation graph. Nodes are appended in evaluation
/// order, so every node's inputs precede it.
pub struct Graph<T: Scalar = f64> {
    pub(crate) nodes: Vec<Node<T>>,
    pub(crate) grads: Vec<Option<Tensor<T>>>,
    params: HashMap<ParamId, Var>,
    train: bool,
    rng: ChaCha8Rng,
    buffer_updates: Vec<(ParamId, Tensor<T>)>,
    check_finite: bool,
}

fn shape_err(op: &'static str, a: &[usize], b: &[usize]) -> AutodiffError {
    AutodiffError::Shape { op, left: a.to_vec(), right: b.to_vec() }
}

impl<T: Scalar> Graph<T> {
    pub fn new(train: bool, seed: u64) -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            params: HashMap::new(),
            train,
            rng: ChaCha8Rng::seed_from_u64(seed),
            buffer_updates: Vec::new(),
            check_finite: false,
        }
    }

    /// Fails any op whose output contains NaN or infinity.
    pub fn with_finite_checks(mut self) -> Self {
        self.check_finite = true;
        self
    }

    pub fn is_train(&self) -> bool {
        self.train
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Result<Var, AutodiffError> {
        if self.check_finite && !value.is_finite() {
            return Err(AutodiffError::NonFinite(op_name(&op)));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { value, op, requires_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Constant input; receives no gradient.
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node { value, op: Op::Input, requires_grad: false });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that receives a gradient.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node { value, op: Op::Input, requires_grad: true });
        Var(self.nodes.len() - 1)
    }

    /// Parameter leaf; repeated calls with the same id return the same node.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let p = store.param(id);
        self.nodes.push(Node { value: p.value.clone(), op: Op::Param, requires_grad: p.trainable });
        let v = Var(self.nodes.len() - 1);
        self.params.insert(id, v);
        v
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradients of every trainable parameter reached by the last backward pass.
    pub fn param_grads(&self) -> Vec<(ParamId, Tensor<T>)> {
        let mut out: Vec<(ParamId, Tensor<T>)> = self
            .params
            .iter()
            .filter(|(_, v)| self.nodes[v.0].requires_grad)
            .filter_map(|(&id, v)| self.grad(*v).map(|g| (id, g.clone())))
            .collect();
        out.sort_by_key(|(id, _)| *id);
        out
    }

    /// Running-statistic updates produced by training-mode batch norm.
    pub fn take_buffer_updates(&mut self) -> Vec<(ParamId, Tensor<T>)> {
        std::mem::take(&mut self.buffer_updates)
    }

    fn binary_same(&self, op: &'static str, a: Var, b: Var) -> Result<(), AutodiffError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(shape_err(op, sa, sb));
        }
        Ok(())
    }

    fn zip(&self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data).expect("same shape")
    }

    /// `[m,k] x [k,n] -> [m,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.cols() != tb.rows() {
            return Err(shape_err("matmul", ta.shape(), tb.shape()));
        }
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        let mut out = Tensor::zeros(&[m, n]);
        gemm(false, false, m, k, n, ta.data(), tb.data(), out.data_mut(), false);
        self.push(out, Op::MatMul(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary_same("add", a, b)?;
        let out = self.zip(a, b, |x, y| x + y);
        self.push(out, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary_same("sub", a, b)?;
        let out = self.zip(a, b, |x, y| x - y);
        self.push(out, Op::Sub(a, b), &[a, b])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary_same("mul", a, b)?;
        let out = self.zip(a, b, |x, y| x * y);
        self.push(out, Op::Mul(a, b), &[a, b])
    }

    /// Adds a length-`n` bias to every row of `[m,n]`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var, AutodiffError> {
        let (tx, tb) = (self.value(x), self.value(b));
        if tb.len() != tx.cols() {
            return Err(shape_err("add_bias", tx.shape(), tb.shape()));
        }
        let n = tx.cols();
        let mut out = tx.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v = *v + tb.data()[i % n];
        }
        self.push(out, Op::AddBias(x, b), &[x, b])
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var, AutodiffError> {
        let k = T::of(c);
        let out = self.value(x).map(|v| v * k);
        self.push(out, Op::Scale(x, c), &[x])
    }

    /// Concatenation of 2-D tensors along rows (`axis = 0`) or columns (`axis = 1`).
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var, AutodiffError> {
        if inputs.is_empty() || axis > 1 {
            return Err(AutodiffError::Invalid("concat needs inputs and axis 0 or 1".into()));
        }
        let first = self.value(inputs[0]).shape().to_vec();
        let rows = self.value(inputs[0]).rows();
        let out = if axis == 1 {
            let mut total = 0;
            for &v in inputs {
                let t = self.value(v);
                if t.rows() != rows {
                    return Err(shape_err("concat", &first, t.shape()));
                }
                total += t.cols();
            }
            let mut data = Vec::with_capacity(rows * total);
            for r in 0..rows {
                for &v in inputs {
                    data.extend_from_slice(self.value(v).row(r));
                }
            }
            Tensor::matrix(rows, total, data)?
        } else {
            let cols = self.value(inputs[0]).cols();
            let mut data = Vec::new();
            let mut total = 0;
            for &v in inputs {
                let t = self.value(v);
                if t.cols() != cols {
                    return Err(shape_err("concat", &first, t.shape()));
                }
                total += t.rows();
                data.extend_from_slice(t.data());
            }
            Tensor::matrix(total, cols, data)?
        };
        self.push(out, Op::Concat { inputs: inputs.to_vec(), axis }, inputs)
    }

    /// Columns `start..end` of a 2-D tensor.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var, AutodiffError> {
        let t = self.value(x);
        if start >= end || end > t.cols() {
            return Err(shape_err("slice_cols", t.shape(), &[start, end]));
        }
        let mut data = Vec::with_capacity(t.rows() * (end - start));
        for r in 0..t.rows() {
            data.extend_from_slice(&t.row(r)[start..end]);
        }
        let out = Tensor::matrix(t.rows(), end - start, data)?;
        self.push(out, Op::SliceCols { x, start }, &[x])
    }

    /// Same buffer under a new shape.
    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var, AutodiffError> {
        let out = self.value(x).clone().reshape(shape)?;
        self.push(out, Op::Reshape(x), &[x])
    }

    /// Rows of `table` (`[V,D]`) selected by index; `None` yields a zero row.
    pub fn embedding(&mut self, table: Var, indices: &[Option<usize>]) -> Result<Var, AutodiffError> {
        let t = self.value(table);
        let (v, d) = (t.rows(), t.cols());
        let mut data = vec![T::zero(); indices.len() * d];
        for (r, idx) in indices.iter().enumerate() {
            if let Some(i) = *idx {
                if i >= v {
                    return Err(AutodiffError::Invalid(format!("embedding index {i} out of range for {v} rows")));
                }
                data[r * d..(r + 1) * d].copy_from_slice(t.row(i));
            }
        }
        let out = Tensor::matrix(indices.len(), d, data)?;
        self.push(out, Op::Embedding { table, indices: indices.to_vec() }, &[table])
    }

    /// Same-padded 1-D convolution over each sequence of a padded batch.
    /// `x` is `[B*L, Din]`, `w` is `[width*Din, Dout]`, `b` has `Dout`
    /// entries; positions outside a sequence's length read as zeros.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, seq: &SeqLayout, width: usize) -> Result<Var, AutodiffError> {
        let (tx, tw, tb) = (self.value(x), self.value(w), self.value(b));
        let din = tx.cols();
        if tx.rows() != seq.rows() || width == 0 || tw.rows() != width * din || tb.len() != tw.cols() {
            return Err(shape_err("conv1d", tx.shape(), tw.shape()));
        }
        let dout = tw.cols();
        let l = seq.max_len;
        let pad = (width - 1) / 2;
        let k = width * din;
        let mut cols = Tensor::zeros(&[seq.rows(), k]);
        for (bi, &len) in seq.lengths.iter().enumerate() {
            for t in 0..len {
                let row = cols.row_mut(bi * l + t);
                for j in 0..width {
                    let s = t as isize + j as isize - pad as isize;
                    if s >= 0 && (s as usize) < len {
                        row[j * din..(j + 1) * din].copy_from_slice(tx.row(bi * l + s as usize));
                    }
                }
            }
        }
        let mut out = Tensor::zeros(&[seq.rows(), dout]);
        for r in 0..seq.rows() {
            out.row_mut(r).copy_from_slice(tb.data());
        }
        gemm(false, false, seq.rows(), k, dout, cols.data(), tw.data(), out.data_mut(), true);
        self.push(out, Op::Conv1d { x, w, b, seq: seq.clone(), width, cols }, &[x, w, b])
    }

    /// Per-sequence maximum over valid time steps: `[B*L, D] -> [B, D]`.
    /// An empty sequence pools to zeros.
    pub fn max_pool_over_time(&mut self, x: Var, seq: &SeqLayout) -> Result<Var, AutodiffError> {
        let tx = self.value(x);
        if tx.rows() != seq.rows() {
            return Err(shape_err("max_pool_over_time", tx.shape(), &[seq.rows()]));
        }
        let d = tx.cols();
        let l = seq.max_len;
        let mut out = Tensor::zeros(&[seq.batch(), d]);
        let mut argmax = vec![usize::MAX; seq.batch() * d];
        for (bi, &len) in seq.lengths.iter().enumerate() {
            if len == 0 {
                continue;
            }
            for c in 0..d {
                let mut best = bi * l;
                for t in 1..len {
                    if tx.at(bi * l + t, c) > tx.at(best, c) {
                        best = bi * l + t;
                    }
                }
                argmax[bi * d + c] = best;
                out.data_mut()[bi * d + c] = tx.at(best, c);
            }
        }
        self.push(out, Op::MaxPoolTime { x, argmax }, &[x])
    }

    /// Step `t` of every sequence: `[B*L, D] -> [B, D]`.
    pub fn time_step(&mut self, x: Var, seq: &SeqLayout, t: usize) -> Result<Var, AutodiffError> {
        let tx = self.value(x);
        if tx.rows() != seq.rows() || t >= seq.max_len {
            return Err(shape_err("time_step", tx.shape(), &[seq.rows(), t]));
        }
        let d = tx.cols();
        let mut data = Vec::with_capacity(seq.batch() * d);
        for bi in 0..seq.batch() {
            data.extend_from_slice(tx.row(bi * seq.max_len + t));
        }
        let out = Tensor::matrix(seq.batch(), d, data)?;
        self.push(out, Op::TimeStep { x, max_len: seq.max_len, t }, &[x])
    }

    /// Reverses each sequence within its own length; padding rows stay put.
    pub fn reverse_seq(&mut self, x: Var, seq: &SeqLayout) -> Result<Var, AutodiffError> {
        let tx = self.value(x);
        if tx.rows() != seq.rows() {
            return Err(shape_err("reverse_seq", tx.shape(), &[seq.rows()]));
        }
        let mut out = tx.clone();
        for r in 0..seq.rows() {
            let src = reversed_row(seq, r);
            out.row_mut(r).copy_from_slice(tx.row(src));
        }
        self.push(out, Op::ReverseSeq { x, seq: seq.clone() }, &[x])
    }

    /// Row `r` from `a` where `mask[r]`, else from `b`.
    pub fn where_rows(&mut self, mask: &[bool], a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary_same("where_rows", a, b)?;
        if mask.len() != self.value(a).rows() {
            return Err(shape_err("where_rows", self.value(a).shape(), &[mask.len()]));
        }
        let mut out = self.value(b).clone();
        for (r, &m) in mask.iter().enumerate() {
            if m {
                out.row_mut(r).copy_from_slice(self.value(a).row(r));
            }
        }
        self.push(out, Op::WhereRows { mask: mask.to_vec(), a, b }, &[a, b])
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let out = self.value(x).map(sigmoid);
        self.push(out, Op::Sigmoid(x), &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let out = self.value(x).map(|v| v.tanh());
        self.push(out, Op::Tanh(x), &[x])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let out = self.value(x).map(|v| v.max(T::zero()));
        self.push(out, Op::Relu(x), &[x])
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let tx = self.value(x);
        let mut out = tx.clone();
        for r in 0..tx.rows() {
            softmax_in_place(out.row_mut(r), None);
        }
        self.push(out, Op::Softmax(x), &[x])
    }

    /// Inverted dropout; the identity outside training mode.
    pub fn dropout(&mut self, x: Var, p: f64) -> Result<Var, AutodiffError> {
        if !(0.0..1.0).contains(&p) {
            return Err(AutodiffError::Invalid(format!("dropout probability {p} not in [0, 1)")));
        }
        if !self.train || p == 0.0 {
            return Ok(x);
        }
        let keep = T::of(1.0 / (1.0 - p));
        let n = self.value(x).len();
        let mask: Vec<T> = (0..n).map(|_| if self.rng.random::<f64>() < p { T::zero() } else { keep }).collect();
        let mut out = self.value(x).clone();
        for (v, &m) in out.data_mut().iter_mut().zip(&mask) {
            *v = *v * m;
        }
        self.push(out, Op::Dropout { x, mask }, &[x])
    }

    /// Per-column batch normalization of `[N, D]` followed by `gamma`/`beta`.
    /// Training mode normalizes with batch statistics (biased variance) and
    /// records updated running statistics; evaluation mode uses the running
    /// statistics stored under `running`.
    #[allow(clippy::too_many_arguments)]
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        store: &ParamStore<T>,
        running: (ParamId, ParamId),
        momentum: f64,
        eps: f64,
    ) -> Result<Var, AutodiffError> {
        let tx = &self.nodes[x.0].value;
        let (n, d) = (tx.rows(), tx.cols());
        let (rm, rv) = (store.get(running.0), store.get(running.1));
        for t in [self.value(gamma), self.value(beta), rm, rv] {
            if t.len() != d {
                return Err(shape_err("batch_norm", tx.shape(), t.shape()));
            }
        }
        let (mean, var): (Vec<T>, Vec<T>) = if self.train {
            let nf = T::of(n as f64);
            let mean: Vec<T> = (0..d).map(|c| (0..n).map(|r| tx.at(r, c)).sum::<T>() / nf).collect();
            let var: Vec<T> = (0..d)
                .map(|c| (0..n).map(|r| (tx.at(r, c) - mean[c]).powi(2)).sum::<T>() / nf)
                .collect();
            let m = T::of(momentum);
            let one = T::one();
            let new_mean = rm.data().iter().zip(&mean).map(|(&o, &b)| (one - m) * o + m * b).collect();
            let new_var = rv.data().iter().zip(&var).map(|(&o, &b)| (one - m) * o + m * b).collect();
            self.buffer_updates.push((running.0, Tensor::new(rm.shape().to_vec(), new_mean)?));
            self.buffer_updates.push((running.1, Tensor::new(rv.shape().to_vec(), new_var)?));
            (mean, var)
        } else {
            (rm.data().to_vec(), rv.data().to_vec())
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + T::of(eps)).sqrt()).collect();
        let mut xhat = Tensor::zeros(&[n, d]);
        let mut out = Tensor::zeros(&[n, d]);
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        for r in 0..n {
            for c in 0..d {
                let h = (tx.at(r, c) - mean[c]) * inv_std[c];
                xhat.data_mut()[r * d + c] = h;
                out.data_mut()[r * d + c] = h * g[c] + b[c];
            }
        }
        let train = self.train;
        self.push(out, Op::BatchNorm { x, gamma, beta, xhat, inv_std, train }, &[x, gamma, beta])
    }

    /// Mean over rows of `w_r * -ln softmax(logits_r)[target_r]`, i.e. the
    /// weighted sum divided by the row count. With `allowed`, disallowed
    /// classes are excluded from the softmax.
    pub fn cross_entropy(
        &mut self,
        logits: Var,
        targets: &[usize],
        allowed: Option<&[bool]>,
        weights: Option<&[f64]>,
    ) -> Result<Var, AutodiffError> {
        let tl = self.value(logits);
        let (n, c) = (tl.rows(), tl.cols());
        if targets.len() != n || allowed.is_some_and(|a| a.len() != n * c) || weights.is_some_and(|w| w.len() != n) {
            return Err(shape_err("cross_entropy", tl.shape(), &[targets.len()]));
        }
        let mut probs = tl.clone();
        let mut total = 0.0;
        let weights: Vec<T> = match weights {
            Some(w) => w.iter().map(|&v| T::of(v)).collect(),
            None => vec![T::one(); n],
        };
        for (r, &t) in targets.iter().enumerate() {
            let mask = allowed.map(|a| &a[r * c..(r + 1) * c]);
            if t >= c || mask.is_some_and(|m| !m[t]) {
                return Err(AutodiffError::Invalid(format!("target {t} invalid for row {r}")));
            }
            let row = probs.row_mut(r);
            let lse = softmax_in_place(row, mask);
            if weights[r] != T::zero() {
                total += weights[r].f64() * (lse - tl.at(r, t).f64());
            }
        }
        let out = Tensor::scalar(T::of(total / n.max(1) as f64));
        self.push(out, Op::CrossEntropy { logits, targets: targets.to_vec(), probs, weights }, &[logits])
    }

    /// Mean binary cross entropy of `sigmoid(logits)` against 0/1 targets.
    pub fn binary_cross_entropy(&mut self, logits: Var, targets: &[f64], weights: Option<&[f64]>) -> Result<Var, AutodiffError> {
        let tl = self.value(logits);
        if tl.len() != targets.len() || weights.is_some_and(|w| w.len() != targets.len()) {
            return Err(shape_err("binary_cross_entropy", tl.shape(), &[targets.len()]));
        }
        let weights: Vec<T> = match weights {
            Some(w) => w.iter().map(|&v| T::of(v)).collect(),
            None => vec![T::one(); targets.len()],
        };
        let mut total = 0.0;
        for ((&z, &y), w) in tl.data().iter().zip(targets).zip(&weights) {
            let z = z.f64();
            total += w.f64() * (z.max(0.0) - z * y + (-z.abs()).exp().ln_1p());
        }
        let out = Tensor::scalar(T::of(total / targets.len().max(1) as f64));
        let targets = targets.iter().map(|&v| T::of(v)).collect();
        self.push(out, Op::BceLogits { logits, targets, weights }, &[logits])
    }

    /// Mean of squared differences over all elements.
    pub fn mean_squared_error(&mut self, pred: Var, targets: &[f64]) -> Result<Var, AutodiffError> {
        let tp = self.value(pred);
        if tp.len() != targets.len() {
            return Err(shape_err("mean_squared_error", tp.shape(), &[targets.len()]));
        }
        let total: f64 = tp.data().iter().zip(targets).map(|(&p, &y)| (p.f64() - y).powi(2)).sum();
        let out = Tensor::scalar(T::of(total / targets.len().max(1) as f64));
        let targets = targets.iter().map(|&v| T::of(v)).collect();
        self.push(out, Op::Mse { pred, targets }, &[pred])
    }

    /// Sum of all elements.
    pub fn sum(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let s: T = self.value(x).data().iter().copied().sum();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    /// `Σ w_i x_i` over scalar nodes.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Result<Var, AutodiffError> {
        let mut total = T::zero();
        for &(v, w) in terms {
            let t = self.value(v);
            if t.len() != 1 {
                return Err(shape_err("weighted_sum", t.shape(), &[1]));
            }
            total = total + T::of(w) * t.item();
        }
        let inputs: Vec<Var> = terms.iter().map(|t| t.0).collect();
        self.push(Tensor::scalar(total), Op::WeightedSum(terms.to_vec()), &inputs)
    }
}

pub(crate) fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

/// Softmax of `row` in place, restricted to `mask` when given (masked
/// entries become exactly zero). Returns the log-sum-exp as `f64`.
pub(crate) fn softmax_in_place<T: Scalar>(row: &mut [T], mask: Option<&[bool]>) -> f64 {
    let on = |i: usize| mask.is_none_or(|m| m[i]);
    let max = row
        .iter()
        .enumerate()
        .filter(|(i, _)| on(*i))
        .map(|(_, v)| *v)
        .fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        row.iter_mut().for_each(|v| *v = T::zero());
        return f64::NEG_INFINITY;
    }
    let mut total = T::zero();
    for (i, v) in row.iter_mut().enumerate() {
        *v = if on(i) { (*v - max).exp() } else { T::zero() };
        total = total + *v;
    }
    row.iter_mut().for_each(|v| *v = *v / total);
    max.f64() + total.f64().ln()
}

pub(crate) fn reversed_row(seq: &SeqLayout, r: usize) -> usize {
    let (b, t) = (r / seq.max_len, r % seq.max_len);
    let len = seq.lengths[b];
    if t < len {
        b * seq.max_len + (len - 1 - t)
    } else {
        r
    }
}

pub(crate) fn op_name<T>(op: &Op<T>) -> &'static str {
    match op {
        Op::Input => "input",
        Op::Param => "param",
        Op::MatMul(..) => "matmul",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::AddBias(..) => "add_bias",
        Op::Scale(..) => "scale",
        Op::Concat { .. } => "concat",
        Op::SliceCols { .. } => "slice_cols",
        Op::Reshape(_) => "reshape",
        Op::Embedding { .. } => "embedding",
        Op::Conv1d { .. } => "conv1d",
        Op::MaxPoolTime { .. } => "max_pool_over_time",
        Op::TimeStep { .. } => "time_step",
        Op::ReverseSeq { .. } => "reverse_seq",
        Op::WhereRows { .. } => "where_rows",
        Op::Sigmoid(_) => "sigmoid",
        Op::Tanh(_) => "tanh",
        Op::Relu(_) => "relu",
        Op::Softmax(_) => "softmax",
        Op::Dropout { .. } => "dropout",
        Op::BatchNorm { .. } => "batch_norm",
        Op::CrossEntropy { .. } => "cross_entropy",
        Op::BceLogits { .. } => "binary_cross_entropy",
        Op::Mse { .. } => "mean_squared_error",
        Op::Sum(_) => "sum",
        Op::WeightedSum(_) => "weighted_sum",
    }
}
