//! Random forest classifier: bootstrap-sampled Gini trees with per-split
//! feature subsampling.

mod codec;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("training data has no rows")]
    Empty,
    #[error("training data has zero features")]
    ZeroFeatures,
    #[error("row {row} has {got} features, expected {expected}")]
    RaggedRow { row: usize, got: usize, expected: usize },
    #[error("non-finite feature value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("label {label} at row {row} is outside [0, {n_classes})")]
    LabelOutOfRange { row: usize, label: usize, n_classes: usize },
    #[error("{rows} feature rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("input has {got} features, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid forest config: {0}")]
    InvalidConfig(String),
    #[error("model format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaxFeatures {
    Sqrt,
    All,
    Fraction(f64),
}

impl MaxFeatures {
    pub fn count(self, n_features: usize) -> usize {
        let k = match self {
            MaxFeatures::Sqrt => (n_features as f64).sqrt().floor() as usize,
            MaxFeatures::All => n_features,
            MaxFeatures::Fraction(f) => (f * n_features as f64).floor() as usize,
        };
        k.clamp(1, n_features.max(1))
    }
}

fn default_estimators() -> usize {
    100
}
fn default_depth() -> usize {
    100
}
fn default_max_features() -> MaxFeatures {
    MaxFeatures::Sqrt
}
fn default_min_leaf() -> usize {
    50
}

/// Defaults are the grid-search optimum: 100 trees, depth 100, `sqrt`
/// features per split, 50 samples per leaf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestConfig {
    #[serde(default = "default_estimators")]
    pub n_estimators: usize,
    #[serde(default = "default_depth")]
    pub max_depth: usize,
    #[serde(default = "default_max_features")]
    pub max_features: MaxFeatures,
    #[serde(default = "default_min_leaf")]
    pub min_samples_leaf: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_estimators: default_estimators(),
            max_depth: default_depth(),
            max_features: default_max_features(),
            min_samples_leaf: default_min_leaf(),
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<(), ForestError> {
        if self.n_estimators < 1 || self.max_depth < 1 || self.min_samples_leaf < 1 {
            return Err(ForestError::InvalidConfig(
                "n_estimators, max_depth and min_samples_leaf must be >= 1".into(),
            ));
        }
        if let MaxFeatures::Fraction(f) = self.max_features {
            if !(f > 0.0 && f <= 1.0) {
                return Err(ForestError::InvalidConfig(format!("max_features fraction {f} not in (0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Impurity decrease weighted by the fraction of bootstrap samples reaching the node.
        weighted_decrease: f64,
    },
    Leaf {
        probs: Vec<f64>,
    },
}

/// Nodes stored in preorder; the root is `nodes[0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn leaf_probs(&self, x: &[f64]) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split { feature, threshold, left, right, .. } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
                Node::Leaf { probs } => return probs,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_splits(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Split { .. })).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    trees: Vec<DecisionTree>,
    n_classes: usize,
    feature_count: usize,
}

struct Trainer<'a> {
    columns: Vec<Vec<f64>>,
    labels: &'a [usize],
    n_classes: usize,
    config: &'a ForestConfig,
    n_try: usize,
}

pub fn fit_forest(
    x: &[Vec<f64>],
    y: &[usize],
    n_classes: usize,
    config: &ForestConfig,
) -> Result<ForestModel, ForestError> {
    config.validate()?;
    if x.len() != y.len() {
        return Err(ForestError::LengthMismatch { rows: x.len(), labels: y.len() });
    }
    if x.is_empty() {
        return Err(ForestError::Empty);
    }
    let feature_count = x[0].len();
    if feature_count == 0 {
        return Err(ForestError::ZeroFeatures);
    }
    for (row, r) in x.iter().enumerate() {
        if r.len() != feature_count {
            return Err(ForestError::RaggedRow { row, got: r.len(), expected: feature_count });
        }
        if let Some(col) = r.iter().position(|v| !v.is_finite()) {
            return Err(ForestError::NonFinite { row, col });
        }
    }
    if let Some(row) = y.iter().position(|&l| l >= n_classes) {
        return Err(ForestError::LabelOutOfRange { row, label: y[row], n_classes });
    }

    let columns: Vec<Vec<f64>> = (0..feature_count).map(|c| x.iter().map(|r| r[c]).collect()).collect();
    let trainer = Trainer { columns, labels: y, n_classes, config, n_try: config.max_features.count(feature_count) };
    let trees = (0..config.n_estimators)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(t as u64 + 1);
            trainer.grow(&mut rng)
        })
        .collect();
    Ok(ForestModel { trees, n_classes, feature_count })
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    impurity: f64,
    split_at: usize,
}

impl Trainer<'_> {
    fn grow(&self, rng: &mut ChaCha8Rng) -> DecisionTree {
        let n = self.labels.len();
        let samples: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let mut nodes = Vec::new();
        self.build(samples, 0, n as f64, rng, &mut nodes);
        DecisionTree { nodes }
    }

    fn counts(&self, samples: &[usize]) -> Vec<f64> {
        let mut c = vec![0.0; self.n_classes];
        for &s in samples {
            c[self.labels[s]] += 1.0;
        }
        c
    }

    fn build(&self, mut samples: Vec<usize>, depth: usize, n_root: f64, rng: &mut ChaCha8Rng, nodes: &mut Vec<Node>) -> usize {
        let id = nodes.len();
        let counts = self.counts(&samples);
        let n = samples.len() as f64;
        let leaf = |nodes: &mut Vec<Node>| {
            nodes.push(Node::Leaf { probs: counts.iter().map(|c| c / n).collect() });
            id
        };
        let parent_impurity = gini(&counts, n);
        let min_leaf = self.config.min_samples_leaf;
        if depth >= self.config.max_depth || parent_impurity == 0.0 || samples.len() < 2 * min_leaf {
            return leaf(nodes);
        }

        let mut features: Vec<usize> = sample(rng, self.columns.len(), self.n_try).into_vec();
        features.sort_unstable();
        let mut best: Option<BestSplit> = None;
        let mut order = samples.clone();
        for &f in &features {
            let col = &self.columns[f];
            order.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
            let mut left = vec![0.0; self.n_classes];
            let mut right = counts.clone();
            let (mut sq_left, mut sq_right) = (0.0, counts.iter().map(|c| c * c).sum::<f64>());
            for i in 0..order.len() - 1 {
                let lab = self.labels[order[i]];
                sq_left += 2.0 * left[lab] + 1.0;
                left[lab] += 1.0;
                sq_right -= 2.0 * right[lab] - 1.0;
                right[lab] -= 1.0;
                let (nl, nr) = ((i + 1) as f64, n - (i + 1) as f64);
                if i + 1 < min_leaf || order.len() - (i + 1) < min_leaf {
                    continue;
                }
                let (lo, hi) = (col[order[i]], col[order[i + 1]]);
                if lo == hi {
                    continue;
                }
                let impurity = (nl - sq_left / nl + nr - sq_right / nr) / n;
                if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                    best = Some(BestSplit { feature: f, threshold: lo + (hi - lo) / 2.0, impurity, split_at: i + 1 });
                }
            }
        }

        let Some(best) = best.filter(|b| parent_impurity - b.impurity > 1e-12) else {
            return leaf(nodes);
        };
        let col = &self.columns[best.feature];
        samples.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
        let right_samples = samples.split_off(best.split_at);
        debug_assert!(samples.iter().all(|&s| col[s] <= best.threshold));

        nodes.push(Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: 0,
            right: 0,
            weighted_decrease: n / n_root * (parent_impurity - best.impurity),
        });
        let l = self.build(samples, depth + 1, n_root, rng, nodes);
        let r = self.build(right_samples, depth + 1, n_root, rng, nodes);
        if let Node::Split { left, right, .. } = &mut nodes[id] {
            *left = l;
            *right = r;
        }
        id
    }
}

fn gini(counts: &[f64], n: f64) -> f64 {
    if n == 0.0 {
        return 0.0;
    }
    1.0 - counts.iter().map(|c| (c / n) * (c / n)).sum::<f64>()
}

impl ForestModel {
    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    /// Mean of the leaf class distributions reached in every tree.
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>, ForestError> {
        if x.len() != self.feature_count {
            return Err(ForestError::DimensionMismatch { expected: self.feature_count, got: x.len() });
        }
        if let Some(col) = x.iter().position(|v| !v.is_finite()) {
            return Err(ForestError::NonFinite { row: 0, col });
        }
        let mut p = vec![0.0; self.n_classes];
        for t in &self.trees {
            for (acc, v) in p.iter_mut().zip(t.leaf_probs(x)) {
                *acc += v;
            }
        }
        let k = self.trees.len() as f64;
        p.iter_mut().for_each(|v| *v /= k);
        Ok(p)
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize, ForestError> {
        let p = self.predict_proba(x)?;
        Ok(argmax(&p))
    }

    /// Mean impurity decrease per feature, normalized to sum to one; a
    /// forest without any split yields the uniform vector.
    pub fn feature_importances(&self) -> Vec<f64> {
        let mut total = vec![0.0; self.feature_count];
        let mut contributing = 0usize;
        for t in &self.trees {
            let mut imp = vec![0.0; self.feature_count];
            for node in &t.nodes {
                if let Node::Split { feature, weighted_decrease, .. } = node {
                    imp[*feature] += weighted_decrease;
                }
            }
            let s: f64 = imp.iter().sum();
            if s > 0.0 {
                contributing += 1;
                for (a, v) in total.iter_mut().zip(imp) {
                    *a += v / s;
                }
            }
        }
        if contributing == 0 {
            return vec![1.0 / self.feature_count as f64; self.feature_count];
        }
        let s: f64 = total.iter().sum();
        total.iter().map(|v| v / s).collect()
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
