mod common;

use common::jacobi::jacobi_svd;
use cota_core::textprep::{build_dictionary, BagOfWords};
use cota_core::vectorize::{fit_lsa, fit_tfidf, lsa_topics, LsaOptions, SparseVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..rows).map(|_| (0..cols).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

/// Columns of `a` as documents.
fn columns(a: &[Vec<f64>]) -> Vec<SparseVector> {
    (0..a[0].len()).map(|j| SparseVector::from_dense(&a.iter().map(|r| r[j]).collect::<Vec<_>>())).collect()
}

fn full(k: usize) -> LsaOptions {
    LsaOptions { variance_threshold: 1.0, max_k: k, seed: 3, ..Default::default() }
}

#[test]
fn jacobi_oracle_reconstructs() {
    let a = random_matrix(7, 5, 1);
    let svd = jacobi_svd(&a);
    for i in 0..7 {
        for j in 0..5 {
            let r: f64 = (0..5).map(|k| svd.u[k][i] * svd.s[k] * svd.v[k][j]).sum();
            assert!((r - a[i][j]).abs() < 1e-12);
        }
    }
}

#[test]
fn full_rank_reconstruction_matches_oracle() {
    let a = random_matrix(50, 30, 7);
    let docs = columns(&a);
    let model = fit_lsa(&docs, 50, full(30)).unwrap();
    let oracle = jacobi_svd(&a);
    assert_eq!(model.k(), 30);
    for (s, o) in model.singular_values().iter().zip(&oracle.s) {
        assert!((s - o).abs() < 1e-9 * oracle.s[0], "{s} vs {o}");
    }
    let (mut err, mut norm) = (0.0, 0.0);
    for (j, d) in docs.iter().enumerate() {
        let rec = model.reconstruct(&model.project(d));
        for i in 0..50 {
            err += (rec[i] - a[i][j]).powi(2);
            norm += a[i][j].powi(2);
        }
    }
    assert!((err / norm).sqrt() < 1e-6);
}

#[test]
fn projection_reproduces_document_factors() {
    let a = random_matrix(10, 8, 21);
    let docs = columns(&a);
    let model = fit_lsa(&docs, 10, full(8)).unwrap();
    let oracle = jacobi_svd(&a);
    for (j, d) in docs.iter().enumerate() {
        let z = model.project(d);
        for k in 0..model.k() {
            // Align the oracle's arbitrary sign with the model's left vector.
            let dot: f64 = (0..10).map(|i| model.term_factors()[(i, k)] * oracle.u[k][i]).sum();
            let expected = dot.signum() * oracle.s[k] * oracle.v[k][j];
            assert!((z.0[k] - expected).abs() < 1e-6, "doc {j} dim {k}: {} vs {expected}", z.0[k]);
        }
    }
}

#[test]
fn projection_is_linear() {
    let a = random_matrix(40, 25, 5);
    let model = fit_lsa(&columns(&a), 40, LsaOptions { variance_threshold: 0.8, max_k: 10, ..Default::default() }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let u = SparseVector::from_dense(&(0..40).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>());
        let w = SparseVector::from_pairs((0..5).map(|_| (rng.random_range(0..40), rng.random_range(-2.0..2.0))));
        let (x, y) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let lhs = model.project(&u.scale(x).add(&w.scale(y)));
        let pu = model.project(&u);
        let pw = model.project(&w);
        for k in 0..model.k() {
            let rhs = x * pu.0[k] + y * pw.0[k];
            assert!((lhs.0[k] - rhs).abs() <= 1e-10 * rhs.abs().max(1.0));
        }
    }
}

#[test]
fn rank_rule_is_minimal() {
    let a = random_matrix(30, 20, 99);
    let model = fit_lsa(&columns(&a), 30, LsaOptions { variance_threshold: 0.9, max_k: 20, ..Default::default() }).unwrap();
    let s = jacobi_svd(&a).s;
    let total: f64 = s.iter().map(|x| x * x).sum();
    let share = |k: usize| s[..k].iter().map(|x| x * x).sum::<f64>() / total;
    let k = model.k();
    assert!(share(k) >= 0.9);
    assert!(share(k - 1) < 0.9);
    assert!(model.variance_retained() >= 0.9);
    assert!(model.singular_values().windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn max_k_caps_rank() {
    let a = random_matrix(30, 20, 2);
    let model = fit_lsa(&columns(&a), 30, LsaOptions { variance_threshold: 0.99, max_k: 3, ..Default::default() }).unwrap();
    assert_eq!(model.k(), 3);
    assert!(model.variance_retained() < 0.99);
}

#[test]
fn topics_separate_disjoint_pools() {
    let pool_a = ["fare", "refund", "charge", "price", "receipt"];
    let pool_b = ["rating", "star", "feedback", "review", "comment"];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let bags: Vec<BagOfWords> = (0..200)
        .map(|i| {
            let pool = if i % 3 == 0 { &pool_b } else { &pool_a };
            let mut b = BagOfWords::new();
            for _ in 0..4 {
                b.add(pool[rng.random_range(0..pool.len())], 1);
            }
            b
        })
        .collect();
    let dict = build_dictionary(&bags, 1, 100).unwrap();
    let tfidf = fit_tfidf(&bags, dict.clone()).unwrap();
    let docs: Vec<_> = bags.iter().map(|b| tfidf.transform(b)).collect();
    let opts = LsaOptions { variance_threshold: 0.99, max_k: 4, seed: 1, ..Default::default() };
    let model = fit_lsa(&docs, tfidf.vocab_size(), opts).unwrap();
    let topics = lsa_topics(&model, &dict, 5);
    assert!(topics.len() >= 2);
    let pools_of = |t: &cota_core::vectorize::Topic| -> (bool, bool) {
        let a = t.terms.iter().all(|(w, _)| pool_a.contains(&w.as_str()));
        let b = t.terms.iter().all(|(w, _)| pool_b.contains(&w.as_str()));
        (a, b)
    };
    let (a0, b0) = pools_of(&topics[0]);
    let (a1, b1) = pools_of(&topics[1]);
    assert!((a0 && b1) || (b0 && a1), "{:?}", &topics[..2]);

    // Larger top_n than vocabulary returns every term, sorted by magnitude.
    let all = lsa_topics(&model, &dict, 1000);
    assert_eq!(all[0].terms.len(), dict.len());
    assert!(all[0].terms.windows(2).all(|w| w[0].1.abs() >= w[1].1.abs()));

    let again = fit_lsa(&docs, tfidf.vocab_size(), opts).unwrap();
    assert_eq!(lsa_topics(&again, &dict, 5), topics);
}
