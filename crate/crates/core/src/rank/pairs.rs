use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{similarity_features, PrototypeSet, RankError, TicketVectors};
use crate::forest::{fit_forest, ForestConfig, ForestModel};

/// A (ticket, class) pair before featurization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairIndex {
    pub row: usize,
    pub class: usize,
    pub label: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairExample {
    pub row: usize,
    pub class: usize,
    pub features: Vec<f64>,
    pub label: bool,
}

/// One positive per row plus up to `negatives` distinct wrong classes drawn
/// uniformly. `labels` holds dense class indices below `n_classes`.
pub fn make_pairs(labels: &[usize], n_classes: usize, negatives: usize, seed: u64) -> Result<Vec<PairIndex>, RankError> {
    if negatives == 0 {
        return Err(RankError::Invalid("negatives_per_positive must be at least 1".into()));
    }
    if n_classes < 2 {
        return Err(RankError::SingleClass);
    }
    let k = negatives.min(n_classes - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(labels.len() * (k + 1));
    for (row, &y) in labels.iter().enumerate() {
        if y >= n_classes {
            return Err(RankError::Invalid(format!("label {y} outside {n_classes} classes")));
        }
        out.push(PairIndex { row, class: y, label: true });
        // Sample among the C-1 others, then skip over the true class.
        let mut neg: Vec<usize> = sample(&mut rng, n_classes - 1, k).into_iter().map(|c| c + (c >= y) as usize).collect();
        neg.sort_unstable();
        out.extend(neg.into_iter().map(|class| PairIndex { row, class, label: false }));
    }
    Ok(out)
}

/// Feature vector of a (ticket, class) pair: cosine channels then the
/// encoded ticket fields. Training and inference both go through here.
pub fn pair_features(tv: &TicketVectors, class: usize, prototypes: &PrototypeSet) -> Vec<f64> {
    let mut f = similarity_features(&tv.tfidf, &tv.lsa, class, prototypes).to_vec();
    f.extend_from_slice(&tv.encoded);
    f
}

pub fn train_ranker(pairs: &[PairExample], config: &ForestConfig) -> Result<ForestModel, RankError> {
    let y: Vec<usize> = pairs.iter().map(|p| p.label as usize).collect();
    if !(y.contains(&0) && y.contains(&1)) {
        return Err(RankError::SingleClass);
    }
    let x: Vec<Vec<f64>> = pairs.iter().map(|p| p.features.clone()).collect();
    Ok(fit_forest(&x, &y, 2, config)?)
}

/// Sorts by descending score, ties by class ascending, and keeps `top_k`.
pub fn sort_scores(mut scores: Vec<(usize, f64)>, top_k: usize) -> Vec<(usize, f64)> {
    scores.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scores.truncate(top_k);
    scores
}

/// Scores each candidate by the ranker's match probability.
pub fn rank_classes(
    model: &ForestModel,
    tv: &TicketVectors,
    candidates: &[usize],
    prototypes: &PrototypeSet,
    top_k: usize,
) -> Result<Vec<(usize, f64)>, RankError> {
    let mut scores = Vec::with_capacity(candidates.len());
    for &c in candidates {
        let p = model.predict_proba(&pair_features(tv, c, prototypes))?;
        scores.push((c, p[1]));
    }
    Ok(sort_scores(scores, top_k))
}
