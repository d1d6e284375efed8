use super::graph::{reversed_row, sigmoid, Node, Op, Var};
use super::tensor::gemm;
use super::{AutodiffError, Graph, Scalar, Tensor};

impl<T: Scalar> Graph<T> {
    /// Reverse sweep from a scalar `loss`, populating gradients of every
    /// node that requires one. Gradients accumulate across fan-out.
    pub fn backward(&mut self, loss: Var) -> Result<(), AutodiffError> {
        let shape = self.value(loss).shape().to_vec();
        if self.value(loss).len() != 1 {
            return Err(AutodiffError::NonScalarLoss(shape));
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[loss.0] = Some(Tensor::full(&shape, T::one()));
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = self.grads[i].take() else { continue };
            let contributions = node_backward(&self.nodes, i, &g);
            self.grads[i] = Some(g);
            for (v, t) in contributions {
                match &mut self.grads[v.0] {
                    Some(acc) => acc.add_assign(&t),
                    slot => *slot = Some(t),
                }
            }
        }
        Ok(())
    }
}

fn scaled<T: Scalar>(g: &Tensor<T>, f: impl Fn(usize, T) -> T) -> Tensor<T> {
    let data = g.data().iter().enumerate().map(|(i, &v)| f(i, v)).collect();
    Tensor::new(g.shape().to_vec(), data).expect("same shape")
}

fn col_sums<T: Scalar>(g: &Tensor<T>, shape: &[usize]) -> Tensor<T> {
    let n = g.cols();
    let mut out = vec![T::zero(); n];
    for r in 0..g.rows() {
        for (o, &v) in out.iter_mut().zip(g.row(r)) {
            *o = *o + v;
        }
    }
    Tensor::new(shape.to_vec(), out).expect("bias shape")
}

fn node_backward<T: Scalar>(nodes: &[Node<T>], i: usize, g: &Tensor<T>) -> Vec<(Var, Tensor<T>)> {
    let need = |v: &Var| nodes[v.0].requires_grad;
    let val = |v: &Var| &nodes[v.0].value;
    let y = &nodes[i].value;
    let mut out = Vec::new();
    match &nodes[i].op {
        Op::Input | Op::Param => {}
        Op::MatMul(a, b) => {
            let (ta, tb) = (val(a), val(b));
            let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
            if need(a) {
                let mut da = Tensor::zeros(ta.shape());
                gemm(false, true, m, n, k, g.data(), tb.data(), da.data_mut(), false);
                out.push((*a, da));
            }
            if need(b) {
                let mut db = Tensor::zeros(tb.shape());
                gemm(true, false, k, m, n, ta.data(), g.data(), db.data_mut(), false);
                out.push((*b, db));
            }
        }
        Op::Add(a, b) => {
            out.push((*a, g.clone()));
            out.push((*b, g.clone()));
        }
        Op::Sub(a, b) => {
            out.push((*a, g.clone()));
            out.push((*b, g.map(|v| -v)));
        }
        Op::Mul(a, b) => {
            let (ta, tb) = (val(a), val(b));
            if need(a) {
                out.push((*a, scaled(g, |j, v| v * tb.data()[j])));
            }
            if need(b) {
                out.push((*b, scaled(g, |j, v| v * ta.data()[j])));
            }
        }
        Op::AddBias(x, b) => {
            out.push((*x, g.clone()));
            if need(b) {
                out.push((*b, col_sums(g, val(b).shape())));
            }
        }
        Op::Scale(x, c) => {
            let c = T::of(*c);
            out.push((*x, g.map(|v| v * c)));
        }
        Op::Concat { inputs, axis } => {
            if *axis == 1 {
                let mut offset = 0;
                for v in inputs {
                    let t = val(v);
                    let w = t.cols();
                    if need(v) {
                        let mut d = Tensor::zeros(t.shape());
                        for r in 0..t.rows() {
                            d.row_mut(r).copy_from_slice(&g.row(r)[offset..offset + w]);
                        }
                        out.push((*v, d));
                    }
                    offset += w;
                }
            } else {
                let mut offset = 0;
                for v in inputs {
                    let t = val(v);
                    if need(v) {
                        let d = g.data()[offset..offset + t.len()].to_vec();
                        out.push((*v, Tensor::new(t.shape().to_vec(), d).expect("shape")));
                    }
                    offset += t.len();
                }
            }
        }
        Op::SliceCols { x, start } => {
            let t = val(x);
            let mut d = Tensor::zeros(t.shape());
            let w = g.cols();
            for r in 0..t.rows() {
                d.row_mut(r)[*start..start + w].copy_from_slice(g.row(r));
            }
            out.push((*x, d));
        }
        Op::Reshape(x) => out.push((*x, g.clone().reshape(val(x).shape().to_vec()).expect("same size"))),
        Op::Embedding { table, indices } => {
            let t = val(table);
            let mut d = Tensor::zeros(t.shape());
            for (r, idx) in indices.iter().enumerate() {
                if let Some(ix) = *idx {
                    for (a, &b) in d.row_mut(ix).iter_mut().zip(g.row(r)) {
                        *a = *a + b;
                    }
                }
            }
            out.push((*table, d));
        }
        Op::Conv1d { x, w, b, seq, width, cols } => {
            let (tx, tw) = (val(x), val(w));
            let (rows, k, dout) = (seq.rows(), cols.cols(), tw.cols());
            if need(w) {
                let mut dw = Tensor::zeros(tw.shape());
                gemm(true, false, k, rows, dout, cols.data(), g.data(), dw.data_mut(), false);
                out.push((*w, dw));
            }
            if need(b) {
                out.push((*b, col_sums(g, val(b).shape())));
            }
            if need(x) {
                let mut dcols = Tensor::zeros(cols.shape());
                gemm(false, true, rows, dout, k, g.data(), tw.data(), dcols.data_mut(), false);
                let din = tx.cols();
                let pad = (width - 1) / 2;
                let l = seq.max_len;
                let mut dx = Tensor::zeros(tx.shape());
                for (bi, &len) in seq.lengths.iter().enumerate() {
                    for t in 0..len {
                        let src = dcols.row(bi * l + t);
                        for j in 0..*width {
                            let s = t as isize + j as isize - pad as isize;
                            if s >= 0 && (s as usize) < len {
                                let dst = dx.row_mut(bi * l + s as usize);
                                for (a, &v) in dst.iter_mut().zip(&src[j * din..(j + 1) * din]) {
                                    *a = *a + v;
                                }
                            }
                        }
                    }
                }
                out.push((*x, dx));
            }
        }
        Op::MaxPoolTime { x, argmax } => {
            let t = val(x);
            let d = t.cols();
            let mut dx = Tensor::zeros(t.shape());
            for (j, &src) in argmax.iter().enumerate() {
                if src != usize::MAX {
                    let c = j % d;
                    dx.data_mut()[src * d + c] = dx.data()[src * d + c] + g.data()[j];
                }
            }
            out.push((*x, dx));
        }
        Op::TimeStep { x, max_len, t } => {
            let tx = val(x);
            let mut dx = Tensor::zeros(tx.shape());
            for b in 0..g.rows() {
                dx.row_mut(b * max_len + t).copy_from_slice(g.row(b));
            }
            out.push((*x, dx));
        }
        Op::ReverseSeq { x, seq } => {
            let mut dx = Tensor::zeros(val(x).shape());
            for r in 0..seq.rows() {
                dx.row_mut(reversed_row(seq, r)).copy_from_slice(g.row(r));
            }
            out.push((*x, dx));
        }
        Op::WhereRows { mask, a, b } => {
            let mut da = Tensor::zeros(g.shape());
            let mut db = Tensor::zeros(g.shape());
            for (r, &m) in mask.iter().enumerate() {
                let dst = if m { da.row_mut(r) } else { db.row_mut(r) };
                dst.copy_from_slice(g.row(r));
            }
            out.push((*a, da));
            out.push((*b, db));
        }
        Op::Sigmoid(x) => out.push((*x, scaled(g, |j, v| {
            let s = y.data()[j];
            v * s * (T::one() - s)
        }))),
        Op::Tanh(x) => out.push((*x, scaled(g, |j, v| {
            let t = y.data()[j];
            v * (T::one() - t * t)
        }))),
        Op::Relu(x) => out.push((*x, scaled(g, |j, v| if y.data()[j] > T::zero() { v } else { T::zero() }))),
        Op::Softmax(x) => {
            let mut dx = g.clone();
            for r in 0..g.rows() {
                let yr = y.row(r);
                let dot: T = g.row(r).iter().zip(yr).map(|(&a, &b)| a * b).sum();
                for (d, (&gv, &yv)) in dx.row_mut(r).iter_mut().zip(g.row(r).iter().zip(yr)) {
                    *d = yv * (gv - dot);
                }
            }
            out.push((*x, dx));
        }
        Op::Dropout { x, mask } => out.push((*x, scaled(g, |j, v| v * mask[j]))),
        Op::BatchNorm { x, gamma, beta, xhat, inv_std, train } => {
            let (n, d) = (xhat.rows(), xhat.cols());
            let gm = val(gamma).data();
            if need(x) {
                let mut dx = Tensor::zeros(xhat.shape());
                let nf = T::of(n as f64);
                for c in 0..d {
                    let dxh: Vec<T> = (0..n).map(|r| g.at(r, c) * gm[c]).collect();
                    if *train {
                        let s1: T = dxh.iter().copied().sum();
                        let s2: T = dxh.iter().enumerate().map(|(r, &v)| v * xhat.at(r, c)).sum();
                        for r in 0..n {
                            dx.data_mut()[r * d + c] = inv_std[c] / nf * (nf * dxh[r] - s1 - xhat.at(r, c) * s2);
                        }
                    } else {
                        for r in 0..n {
                            dx.data_mut()[r * d + c] = dxh[r] * inv_std[c];
                        }
                    }
                }
                out.push((*x, dx));
            }
            if need(gamma) {
                let data = (0..d).map(|c| (0..n).map(|r| g.at(r, c) * xhat.at(r, c)).sum()).collect();
                out.push((*gamma, Tensor::new(val(gamma).shape().to_vec(), data).expect("shape")));
            }
            if need(beta) {
                out.push((*beta, col_sums(g, val(beta).shape())));
            }
        }
        Op::CrossEntropy { logits, targets, probs, weights } => {
            let n = T::of(targets.len().max(1) as f64);
            let g0 = g.item();
            let mut d = probs.clone();
            for (r, &t) in targets.iter().enumerate() {
                let k = g0 * weights[r] / n;
                let row = d.row_mut(r);
                row[t] = row[t] - T::one();
                row.iter_mut().for_each(|v| *v = *v * k);
            }
            out.push((*logits, d));
        }
        Op::BceLogits { logits, targets, weights } => {
            let n = T::of(targets.len().max(1) as f64);
            let g0 = g.item();
            let z = val(logits);
            out.push((*logits, scaled(z, |j, v| g0 * weights[j] / n * (sigmoid(v) - targets[j]))));
        }
        Op::Mse { pred, targets } => {
            let n = T::of(targets.len().max(1) as f64);
            let g0 = g.item();
            let p = val(pred);
            out.push((*pred, scaled(p, |j, v| g0 * T::of(2.0) * (v - targets[j]) / n)));
        }
        Op::Sum(x) => out.push((*x, Tensor::full(val(x).shape(), g.item()))),
        Op::WeightedSum(terms) => {
            for (v, w) in terms {
                out.push((*v, Tensor::full(val(v).shape(), g.item() * T::of(*w))));
            }
        }
    }
    out.retain(|(v, _)| need(v));
    out
}
