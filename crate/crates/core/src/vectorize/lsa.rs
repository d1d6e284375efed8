use std::fmt::Write as _;
use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::svd::{randomized_svd, ColumnMatrix, LinearOperator, RandomizedSvdOptions};
use super::{SparseVector, VectorizeError};
use crate::textprep::Dictionary;

const MAGIC: &[u8; 8] = b"COTALSA\0";
const VERSION: u8 = 1;

/// Dense document vector in the latent space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsaVector(pub Vec<f64>);

impl LsaVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn normalized(&self) -> LsaVector {
        let n = self.norm();
        if n == 0.0 {
            self.clone()
        } else {
            LsaVector(self.0.iter().map(|x| x / n).collect())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LsaOptions {
    pub variance_threshold: f64,
    pub max_k: usize,
    pub oversampling: usize,
    pub power_iterations: usize,
    pub seed: u64,
}

impl Default for LsaOptions {
    fn default() -> Self {
        Self { variance_threshold: 0.9, max_k: 200, oversampling: 10, power_iterations: 4, seed: 0 }
    }
}

/// Truncated SVD of the term-document matrix `T ≈ U_k Σ_k V_k^T`.
///
/// `term_factors` holds `U_k`; a document `d` projects to `U_k^T d`, so a
/// training column `j` maps to `Σ_k` times the `j`-th row of `V_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LsaModel {
    term_factors: DMatrix<f64>,
    singular_values: Vec<f64>,
    variance_retained: f64,
}

/// Fits LSA on documents given as columns over a vocabulary of `vocab_size`.
///
/// `k` is the smallest rank whose share of the squared Frobenius norm
/// reaches the threshold, capped at `max_k`. The denominator is the exact
/// squared Frobenius norm of the matrix, not the sum over the sketch.
pub fn fit_lsa(docs: &[SparseVector], vocab_size: usize, opts: LsaOptions) -> Result<LsaModel, VectorizeError> {
    if !(opts.variance_threshold > 0.0 && opts.variance_threshold <= 1.0) {
        return Err(VectorizeError::InvalidParameter(format!(
            "variance_threshold must be in (0, 1], got {}",
            opts.variance_threshold
        )));
    }
    if opts.max_k < 1 {
        return Err(VectorizeError::InvalidParameter("max_k must be >= 1".into()));
    }
    if docs.len() < 2 {
        return Err(VectorizeError::InvalidParameter(format!("need at least 2 documents, got {}", docs.len())));
    }
    if let Some(bad) = docs.iter().filter_map(SparseVector::max_index).find(|&i| i >= vocab_size) {
        return Err(VectorizeError::InvalidParameter(format!(
            "term index {bad} out of range for vocabulary {vocab_size}"
        )));
    }
    let matrix = ColumnMatrix::new(vocab_size, docs);
    let total = matrix.frobenius_norm_squared();
    if total == 0.0 {
        return Err(VectorizeError::Degenerate);
    }

    let svd = randomized_svd(
        &matrix,
        opts.max_k,
        RandomizedSvdOptions {
            oversampling: opts.oversampling,
            power_iterations: opts.power_iterations,
            seed: opts.seed,
        },
    );
    let k = choose_rank(&svd.singular_values, total, opts.variance_threshold, opts.max_k);
    let singular_values = svd.singular_values[..k].to_vec();
    let retained = singular_values.iter().map(|s| s * s).sum::<f64>() / total;
    Ok(LsaModel {
        term_factors: svd.u.columns(0, k).into_owned(),
        singular_values,
        variance_retained: retained.min(1.0),
    })
}

/// Smallest `k` with `sum_{i<k} σ_i² / total >= threshold`, restricted to
/// numerically nonzero values and capped at `max_k`.
pub fn choose_rank(singular_values: &[f64], total: f64, threshold: f64, max_k: usize) -> usize {
    let top = singular_values.first().copied().unwrap_or(0.0);
    let positive = singular_values.iter().take_while(|&&s| s > top * 1e-12 && s > 0.0).count().max(1);
    let mut acc = 0.0;
    let mut k = positive;
    for (i, s) in singular_values[..positive].iter().enumerate() {
        acc += s * s;
        if acc / total >= threshold {
            k = i + 1;
            break;
        }
    }
    k.min(max_k)
}

impl LsaModel {
    pub fn k(&self) -> usize {
        self.singular_values.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.term_factors.nrows()
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn variance_retained(&self) -> f64 {
        self.variance_retained
    }

    pub fn term_factors(&self) -> &DMatrix<f64> {
        &self.term_factors
    }

    pub fn project(&self, v: &SparseVector) -> LsaVector {
        let mut out = vec![0.0; self.k()];
        for (i, w) in v.iter() {
            debug_assert!(i < self.vocab_size());
            if i >= self.vocab_size() {
                continue;
            }
            for (d, o) in out.iter_mut().enumerate() {
                *o += w * self.term_factors[(i, d)];
            }
        }
        LsaVector(out)
    }

    /// Maps a latent vector back to term space (`U_k z`).
    pub fn reconstruct(&self, z: &LsaVector) -> Vec<f64> {
        let mut out = vec![0.0; self.vocab_size()];
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..self.k()).map(|d| self.term_factors[(i, d)] * z.0[d]).sum();
        }
        out
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&[VERSION])?;
        w.write_all(&(self.vocab_size() as u64).to_le_bytes())?;
        w.write_all(&(self.k() as u64).to_le_bytes())?;
        w.write_all(&self.variance_retained.to_le_bytes())?;
        for s in &self.singular_values {
            w.write_all(&s.to_le_bytes())?;
        }
        for i in 0..self.vocab_size() {
            for d in 0..self.k() {
                w.write_all(&self.term_factors[(i, d)].to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self, VectorizeError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(VectorizeError::Format("not an LSA model file".into()));
        }
        let mut version = [0u8; 1];
        r.read_exact(&mut version)?;
        if version[0] != VERSION {
            return Err(VectorizeError::Format(format!("unsupported LSA model version {}", version[0])));
        }
        let vocab = read_u64(&mut r)? as usize;
        let k = read_u64(&mut r)? as usize;
        let variance_retained = read_f64(&mut r)?;
        let singular_values = (0..k).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>, _>>()?;
        let mut term_factors = DMatrix::zeros(vocab, k);
        for i in 0..vocab {
            for d in 0..k {
                term_factors[(i, d)] = read_f64(&mut r)?;
            }
        }
        Ok(Self { term_factors, singular_values, variance_retained })
    }

    /// Text sidecar: `index<TAB>singular value` lines.
    pub fn singular_values_text(&self) -> String {
        let mut s = String::new();
        for (i, v) in self.singular_values.iter().enumerate() {
            writeln!(s, "{i}\t{v:?}").unwrap();
        }
        s
    }
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> std::io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn project_lsa(model: &LsaModel, v: &SparseVector) -> LsaVector {
    model.project(v)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Topic {
    pub dimension: usize,
    pub terms: Vec<(String, f64)>,
}

/// For each latent dimension, the `top_n` terms by absolute factor weight.
pub fn lsa_topics(model: &LsaModel, dictionary: &Dictionary, top_n: usize) -> Vec<Topic> {
    (0..model.k())
        .map(|d| {
            let mut idx: Vec<usize> = (0..model.vocab_size().min(dictionary.len())).collect();
            idx.sort_by(|&a, &b| {
                model.term_factors[(b, d)]
                    .abs()
                    .total_cmp(&model.term_factors[(a, d)].abs())
                    .then(a.cmp(&b))
            });
            idx.truncate(top_n.max(1));
            Topic {
                dimension: d,
                terms: idx.into_iter().map(|i| (dictionary.term(i).to_string(), model.term_factors[(i, d)])).collect(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(threshold: f64, max_k: usize) -> LsaOptions {
        LsaOptions { variance_threshold: threshold, max_k, ..Default::default() }
    }

    #[test]
    fn rank_one() {
        // Columns of [[2,0],[0,0]].
        let docs = [SparseVector::from_dense(&[2.0, 0.0]), SparseVector::new()];
        let m = fit_lsa(&docs, 2, opts(0.9, 2)).unwrap();
        assert_eq!(m.k(), 1);
        assert!((m.singular_values()[0] - 2.0).abs() < 1e-12);
        assert!((m.variance_retained() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_threshold() {
        let docs = [SparseVector::from_dense(&[3.0, 0.0]), SparseVector::from_dense(&[0.0, 1.0])];
        let m = fit_lsa(&docs, 2, opts(0.9, 2)).unwrap();
        assert_eq!(m.k(), 1);
        assert!((m.variance_retained() - 0.9).abs() < 1e-12);
        let m = fit_lsa(&docs, 2, opts(0.95, 2)).unwrap();
        assert_eq!(m.k(), 2);
    }

    #[test]
    fn errors() {
        let docs = [SparseVector::new(), SparseVector::new()];
        assert!(matches!(fit_lsa(&docs, 3, opts(0.9, 2)), Err(VectorizeError::Degenerate)));
        assert!(fit_lsa(&docs[..1], 3, opts(0.9, 2)).is_err());
        assert!(fit_lsa(&docs, 3, opts(0.0, 2)).is_err());
        assert!(fit_lsa(&docs, 3, opts(1.5, 2)).is_err());
    }

    #[test]
    fn zero_projects_to_zero_and_binary_round_trip() {
        let docs: Vec<_> = (0..6)
            .map(|j| SparseVector::from_dense(&[(j as f64).sin(), 1.0, (j * j) as f64 * 0.1, 0.5]))
            .collect();
        let m = fit_lsa(&docs, 4, opts(1.0, 4)).unwrap();
        assert!(m.project(&SparseVector::new()).0.iter().all(|&x| x == 0.0));
        let mut buf = Vec::new();
        m.write_binary(&mut buf).unwrap();
        assert_eq!(LsaModel::read_binary(&buf[..]).unwrap(), m);
        buf[0] = b'X';
        assert!(LsaModel::read_binary(&buf[..]).is_err());
        assert_eq!(m.singular_values_text().lines().count(), m.k());
    }
}
