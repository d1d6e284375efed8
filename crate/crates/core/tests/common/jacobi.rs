//! One-sided Jacobi SVD on plain row-major vectors. Slow, simple, and
//! independent of the library's linear-algebra path.

pub struct DenseSvd {
    /// `u[j]` is the j-th left singular vector (length m).
    pub u: Vec<Vec<f64>>,
    pub s: Vec<f64>,
    /// `v[j]` is the j-th right singular vector (length n).
    pub v: Vec<Vec<f64>>,
}

/// `a` is m rows of n columns.
pub fn jacobi_svd(a: &[Vec<f64>]) -> DenseSvd {
    let m = a.len();
    let n = a[0].len();
    // Work on columns of A (as vectors of length m).
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| (0..m).map(|i| a[i][j]).collect()).collect();
    let mut v: Vec<Vec<f64>> = (0..n).map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect()).collect();

    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = cols[p].iter().map(|x| x * x).sum();
                let beta: f64 = cols[q].iter().map(|x| x * x).sum();
                let gamma: f64 = cols[p].iter().zip(&cols[q]).map(|(x, y)| x * y).sum();
                if gamma == 0.0 {
                    continue;
                }
                off = off.max(gamma.abs() / (alpha * beta).sqrt().max(1e-300));
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (x, y) = (cols[p][i], cols[q][i]);
                    cols[p][i] = c * x - s * y;
                    cols[q][i] = s * x + c * y;
                }
                for i in 0..n {
                    let (x, y) = (v[p][i], v[q][i]);
                    v[p][i] = c * x - s * y;
                    v[q][i] = s * x + c * y;
                }
            }
        }
        if off < 1e-15 {
            break;
        }
    }

    let mut triplets: Vec<(f64, Vec<f64>, Vec<f64>)> = (0..n)
        .map(|j| {
            let norm = cols[j].iter().map(|x| x * x).sum::<f64>().sqrt();
            let u = if norm > 0.0 { cols[j].iter().map(|x| x / norm).collect() } else { vec![0.0; m] };
            (norm, u, v[j].clone())
        })
        .collect();
    triplets.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let r = m.min(n);
    triplets.truncate(r);
    DenseSvd {
        s: triplets.iter().map(|t| t.0).collect(),
        u: triplets.iter().map(|t| t.1.clone()).collect(),
        v: triplets.into_iter().map(|t| t.2).collect(),
    }
}

