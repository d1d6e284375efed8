//! Randomized truncated SVD: Gaussian range finder with power iterations,
//! followed by a dense SVD of the small projected matrix.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::SparseVector;

/// A matrix known only through products with dense blocks.
pub trait LinearOperator {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `A * x` for `x` of shape `ncols x l`.
    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64>;
    /// `A^T * y` for `y` of shape `nrows x l`.
    fn apply_transpose(&self, y: &DMatrix<f64>) -> DMatrix<f64>;
    fn frobenius_norm_squared(&self) -> f64;
}

impl LinearOperator for DMatrix<f64> {
    fn nrows(&self) -> usize {
        self.nrows()
    }
    fn ncols(&self) -> usize {
        self.ncols()
    }
    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self * x
    }
    fn apply_transpose(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        self.tr_mul(y)
    }
    fn frobenius_norm_squared(&self) -> f64 {
        self.norm_squared()
    }
}

/// Sparse matrix stored as a list of columns (one per document).
#[derive(Debug, Clone)]
pub struct ColumnMatrix<'a> {
    rows: usize,
    columns: &'a [SparseVector],
}

impl<'a> ColumnMatrix<'a> {
    pub fn new(rows: usize, columns: &'a [SparseVector]) -> Self {
        debug_assert!(columns.iter().all(|c| c.max_index().is_none_or(|i| i < rows)));
        Self { rows, columns }
    }
}

impl LinearOperator for ColumnMatrix<'_> {
    fn nrows(&self) -> usize {
        self.rows
    }
    fn ncols(&self) -> usize {
        self.columns.len()
    }
    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let l = x.ncols();
        let mut out = DMatrix::zeros(self.rows, l);
        for (j, col) in self.columns.iter().enumerate() {
            for c in 0..l {
                let xj = x[(j, c)];
                if xj == 0.0 {
                    continue;
                }
                let mut dst = out.column_mut(c);
                for (i, w) in col.iter() {
                    dst[i] += w * xj;
                }
            }
        }
        out
    }
    fn apply_transpose(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        let l = y.ncols();
        let mut out = DMatrix::zeros(self.columns.len(), l);
        for (j, col) in self.columns.iter().enumerate() {
            for c in 0..l {
                let src = y.column(c);
                out[(j, c)] = col.iter().map(|(i, w)| w * src[i]).sum();
            }
        }
        out
    }
    fn frobenius_norm_squared(&self) -> f64 {
        self.columns.iter().flat_map(|c| c.iter()).map(|(_, w)| w * w).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomizedSvdOptions {
    pub oversampling: usize,
    pub power_iterations: usize,
    pub seed: u64,
}

impl Default for RandomizedSvdOptions {
    fn default() -> Self {
        Self { oversampling: 10, power_iterations: 4, seed: 0 }
    }
}

/// Leading singular triplets, sorted by nonincreasing singular value.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub vt: DMatrix<f64>,
}

fn orthonormal_basis(y: DMatrix<f64>) -> DMatrix<f64> {
    y.qr().q()
}

/// Approximates the top `rank` singular triplets of `a`. With
/// `rank + oversampling >= min(rows, cols)` the sketch spans the whole
/// range and the result is exact up to rounding.
pub fn randomized_svd<A: LinearOperator + ?Sized>(a: &A, rank: usize, opts: RandomizedSvdOptions) -> TruncatedSvd {
    let (m, n) = (a.nrows(), a.ncols());
    let l = (rank + opts.oversampling).min(m.min(n)).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let omega = DMatrix::from_fn(n, l, |_, _| StandardNormal.sample(&mut rng));

    let mut q = orthonormal_basis(a.apply(&omega));
    for _ in 0..opts.power_iterations {
        let z = orthonormal_basis(a.apply_transpose(&q));
        q = orthonormal_basis(a.apply(&z));
    }
    // B = Q^T A, formed as (A^T Q)^T.
    let b = a.apply_transpose(&q).transpose();
    let svd = b.svd(true, true);
    let (ub, s, vt) = (svd.u.unwrap(), svd.singular_values, svd.v_t.unwrap());

    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]).then(i.cmp(&j)));
    let keep = order.len().min(rank.max(1));
    let u_full = &q * &ub;
    let mut u = DMatrix::zeros(m, keep);
    let mut v_t = DMatrix::zeros(keep, n);
    let mut values = Vec::with_capacity(keep);
    for (dst, &src) in order.iter().take(keep).enumerate() {
        // Sign convention: the largest-magnitude entry of each left vector is positive.
        let col = u_full.column(src);
        let pivot = col.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        u.set_column(dst, &(col * sign));
        v_t.set_row(dst, &(vt.row(src) * sign));
        values.push(s[src]);
    }
    TruncatedSvd { u, singular_values: values, vt: v_t }
}
