use cota_core::forest::{fit_forest, ForestConfig, MaxFeatures, Node};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn walk(nodes: &[Node], x: &[f64]) -> Vec<f64> {
    let mut i = 0;
    loop {
        match &nodes[i] {
            Node::Split { feature, threshold, left, right, .. } => {
                i = if x[*feature] <= *threshold { *left } else { *right }
            }
            Node::Leaf { probs } => return probs.clone(),
        }
    }
}

#[test]
fn probabilities_are_mean_of_tree_leaves() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x: Vec<Vec<f64>> = (0..150).map(|_| (0..4).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
    let y: Vec<usize> = x.iter().map(|r| ((r[0] + r[1]) * 1.5) as usize).collect();
    let cfg = ForestConfig { n_estimators: 3, max_depth: 6, min_samples_leaf: 3, seed: 2, ..Default::default() };
    let m = fit_forest(&x, &y, 3, &cfg).unwrap();
    assert_eq!(m.trees().len(), 3);
    for _ in 0..40 {
        let q: Vec<f64> = (0..4).map(|_| rng.random_range(-0.2..1.2)).collect();
        let leaves: Vec<Vec<f64>> = m.trees().iter().map(|t| walk(t.nodes(), &q)).collect();
        let p = m.predict_proba(&q).unwrap();
        for c in 0..3 {
            let expected = (leaves[0][c] + leaves[1][c] + leaves[2][c]) / 3.0;
            assert!((p[c] - expected).abs() < 1e-12);
        }
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn informative_feature_dominates_importance() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x: Vec<Vec<f64>> = (0..400).map(|_| (0..5).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
    let y: Vec<usize> = x.iter().map(|r| (r[2] > 0.5) as usize).collect();
    let cfg = ForestConfig {
        n_estimators: 30,
        max_depth: 10,
        min_samples_leaf: 5,
        max_features: MaxFeatures::All,
        seed: 4,
    };
    let imp = fit_forest(&x, &y, 2, &cfg).unwrap().feature_importances();
    assert!((imp.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert!(imp[2] > 0.9, "{imp:?}");
}

#[test]
fn leaves_hold_at_least_min_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x: Vec<Vec<f64>> = (0..500).map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]).collect();
    let y: Vec<usize> = x.iter().map(|r| (r[0] * 4.0) as usize).collect();
    let cfg = ForestConfig { n_estimators: 5, min_samples_leaf: 25, seed: 1, ..Default::default() };
    let m = fit_forest(&x, &y, 4, &cfg).unwrap();
    for t in m.trees() {
        let leaves = t.nodes().iter().filter(|n| matches!(n, Node::Leaf { .. })).count();
        // A bootstrap sample has 500 rows; each leaf keeps >= 25 of them.
        assert!(leaves <= 500 / 25, "{leaves}");
    }
}
