//! Layers assembled from graph primitives.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AutodiffError, Graph, ParamId, ParamStore, Scalar, SeqLayout, Tensor, Var};

/// Affine map `x W + b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new<T: Scalar, R: Rng>(store: &mut ParamStore<T>, name: &str, input: usize, output: usize, rng: &mut R) -> Self {
        let w = store.add_glorot(&format!("{name}.w"), input, output, rng);
        let b = store.add_zeros(&format!("{name}.b"), &[output]);
        Self { w, b, input, output }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Result<Var, AutodiffError> {
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        let h = g.matmul(x, w)?;
        g.add_bias(h, b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellType {
    Simple,
    Lstm,
    Gru,
}

impl CellType {
    fn gates(self) -> usize {
        match self {
            CellType::Simple => 1,
            CellType::Lstm => 4,
            CellType::Gru => 3,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CellState {
    pub h: Var,
    pub c: Option<Var>,
}

/// One recurrent cell: simple (`tanh`), LSTM or GRU.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RnnCell {
    pub kind: CellType,
    pub w: ParamId,
    pub u: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl RnnCell {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        kind: CellType,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let k = kind.gates() * hidden;
        let w = store.add_glorot(&format!("{name}.w"), input, k, rng);
        let u = store.add_glorot(&format!("{name}.u"), hidden, k, rng);
        let mut bias = Tensor::zeros(&[k]);
        if kind == CellType::Lstm {
            // Forget gate starts open.
            bias.data_mut()[hidden..2 * hidden].iter_mut().for_each(|v| *v = T::one());
        }
        let b = store.add(&format!("{name}.b"), bias);
        Self { kind, w, u, b, input, hidden }
    }

    pub fn zero_state<T: Scalar>(&self, g: &mut Graph<T>, batch: usize) -> CellState {
        let h = g.input(Tensor::zeros(&[batch, self.hidden]));
        let c = (self.kind == CellType::Lstm).then(|| g.input(Tensor::zeros(&[batch, self.hidden])));
        CellState { h, c }
    }

    pub fn step<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var, s: CellState) -> Result<CellState, AutodiffError> {
        let hd = self.hidden;
        let (w, u, b) = (g.param(store, self.w), g.param(store, self.u), g.param(store, self.b));
        let xw = g.matmul(x, w)?;
        let xw = g.add_bias(xw, b)?;
        let hu = g.matmul(s.h, u)?;
        match self.kind {
            CellType::Simple => {
                let a = g.add(xw, hu)?;
                Ok(CellState { h: g.tanh(a)?, c: None })
            }
            CellType::Lstm => {
                let a = g.add(xw, hu)?;
                let i = g.slice_cols(a, 0, hd)?;
                let i = g.sigmoid(i)?;
                let f = g.slice_cols(a, hd, 2 * hd)?;
                let f = g.sigmoid(f)?;
                let cand = g.slice_cols(a, 2 * hd, 3 * hd)?;
                let cand = g.tanh(cand)?;
                let o = g.slice_cols(a, 3 * hd, 4 * hd)?;
                let o = g.sigmoid(o)?;
                let prev = s.c.ok_or_else(|| AutodiffError::Invalid("LSTM state lacks a cell".into()))?;
                let keep = g.mul(f, prev)?;
                let write = g.mul(i, cand)?;
                let c = g.add(keep, write)?;
                let tc = g.tanh(c)?;
                Ok(CellState { h: g.mul(o, tc)?, c: Some(c) })
            }
            CellType::Gru => {
                let xr = g.slice_cols(xw, 0, hd)?;
                let hr = g.slice_cols(hu, 0, hd)?;
                let r = g.add(xr, hr)?;
                let r = g.sigmoid(r)?;
                let xz = g.slice_cols(xw, hd, 2 * hd)?;
                let hz = g.slice_cols(hu, hd, 2 * hd)?;
                let z = g.add(xz, hz)?;
                let z = g.sigmoid(z)?;
                let xn = g.slice_cols(xw, 2 * hd, 3 * hd)?;
                let hn = g.slice_cols(hu, 2 * hd, 3 * hd)?;
                let rh = g.mul(r, hn)?;
                let n = g.add(xn, rh)?;
                let n = g.tanh(n)?;
                let diff = g.sub(s.h, n)?;
                let zd = g.mul(z, diff)?;
                Ok(CellState { h: g.add(n, zd)?, c: None })
            }
        }
    }

    /// Runs over a padded batch and returns the per-sequence final state and
    /// the `[B*L, H]` output sequence. Padding steps leave the state unchanged.
    pub fn run<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: Var,
        seq: &SeqLayout,
        reverse: bool,
    ) -> Result<(Var, Var), AutodiffError> {
        let x = if reverse { g.reverse_seq(x, seq)? } else { x };
        let mut state = self.zero_state(g, seq.batch());
        let mut outputs = Vec::with_capacity(seq.max_len);
        for t in 0..seq.max_len {
            let xt = g.time_step(x, seq, t)?;
            let next = self.step(g, store, xt, state)?;
            let active = seq.active_at(t);
            let h = g.where_rows(&active, next.h, state.h)?;
            let c = match (next.c, state.c) {
                (Some(nc), Some(oc)) => Some(g.where_rows(&active, nc, oc)?),
                _ => None,
            };
            state = CellState { h, c };
            outputs.push(h);
        }
        // `[B, L*H]` with steps along columns has the row order of `[B*L, H]`.
        let stacked = g.concat(&outputs, 1)?;
        let per_row = g.reshape(stacked, vec![seq.rows(), self.hidden])?;
        let per_row = if reverse { g.reverse_seq(per_row, seq)? } else { per_row };
        Ok((state.h, per_row))
    }
}
