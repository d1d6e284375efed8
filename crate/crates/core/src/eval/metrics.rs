use std::collections::{BTreeMap, HashSet};
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::corpus::{ContactTypeTree, NodeId};

use super::EvalError;

/// Drops repeated labels, keeping the first (best-ranked) occurrence.
pub fn dedup<L: Eq + Hash + Clone>(ranking: &[L]) -> Vec<L> {
    let mut seen = HashSet::new();
    ranking.iter().filter(|l| seen.insert((*l).clone())).cloned().collect()
}

fn check<P, L>(preds: &[P], truths: &[L]) -> Result<(), EvalError> {
    if truths.is_empty() {
        return Err(EvalError::Empty);
    }
    if preds.len() != truths.len() {
        return Err(EvalError::Misaligned(format!("{} predictions for {} truths", preds.len(), truths.len())));
    }
    Ok(())
}

fn rate(hits: usize, n: usize) -> f64 {
    hits as f64 / n as f64
}

/// Fraction of rankings whose first entry is the truth.
pub fn accuracy<L: PartialEq>(preds: &[Vec<L>], truths: &[L]) -> Result<f64, EvalError> {
    check(preds, truths)?;
    let hits = preds.iter().zip(truths).filter(|(p, t)| p.first() == Some(t)).count();
    Ok(rate(hits, truths.len()))
}

/// Fraction of rankings holding the truth among their first `k` distinct labels.
pub fn hits_at_k<L: Eq + Hash + Clone>(preds: &[Vec<L>], truths: &[L], k: usize) -> Result<f64, EvalError> {
    check(preds, truths)?;
    let hits = preds.iter().zip(truths).filter(|(p, t)| dedup(p).iter().take(k).any(|l| l == *t)).count();
    Ok(rate(hits, truths.len()))
}

/// Fraction of tickets where both tasks are right at rank one.
pub fn combined_accuracy<A: PartialEq, B: PartialEq>(
    pred_a: &[Vec<A>],
    pred_b: &[Vec<B>],
    truth_a: &[A],
    truth_b: &[B],
) -> Result<f64, EvalError> {
    check(pred_a, truth_a)?;
    check(pred_b, truth_b)?;
    if truth_a.len() != truth_b.len() {
        return Err(EvalError::Misaligned(format!("{} tickets for one task, {} for the other", truth_a.len(), truth_b.len())));
    }
    let hits = (0..truth_a.len())
        .filter(|&i| pred_a[i].first() == Some(&truth_a[i]) && pred_b[i].first() == Some(&truth_b[i]))
        .count();
    Ok(rate(hits, truth_a.len()))
}

/// Accuracy that also accepts the truth's parent as a correct answer.
pub fn accuracy_plus_parent(preds: &[Vec<NodeId>], truths: &[NodeId], tree: &ContactTypeTree) -> Result<f64, EvalError> {
    check(preds, truths)?;
    for &n in truths.iter().chain(preds.iter().filter_map(|p| p.first())) {
        if !tree.contains(n) {
            return Err(EvalError::UnknownLabel(n.to_string()));
        }
    }
    let hits = preds
        .iter()
        .zip(truths)
        .filter(|(p, &t)| p.first().is_some_and(|&top| top == t || tree.parent(t) == Some(top)))
        .count();
    Ok(rate(hits, truths.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats<L> {
    pub class: L,
    /// Occurrences among the truths.
    pub frequency: usize,
    pub predicted: usize,
    pub correct: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision, recall and F1 for every label seen in either list, sorted by
/// descending truth frequency (ties by label).
pub fn per_class_f1<L: Ord + Clone>(top1: &[Option<L>], truths: &[L]) -> Result<Vec<ClassStats<L>>, EvalError> {
    check(top1, truths)?;
    let mut counts: BTreeMap<L, [usize; 3]> = BTreeMap::new();
    for (p, t) in top1.iter().zip(truths) {
        counts.entry(t.clone()).or_default()[0] += 1;
        if let Some(p) = p {
            let c = counts.entry(p.clone()).or_default();
            c[1] += 1;
            if p == t {
                c[2] += 1;
            }
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let mut out: Vec<ClassStats<L>> = counts
        .into_iter()
        .map(|(class, [frequency, predicted, correct])| {
            let precision = ratio(correct, predicted);
            let recall = ratio(correct, frequency);
            let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
            ClassStats { class, frequency, predicted, correct, precision, recall, f1 }
        })
        .collect();
    out.sort_by(|a, b| b.frequency.cmp(&a.frequency).then_with(|| a.class.cmp(&b.class)));
    Ok(out)
}

/// Plot-ready table: one row per class with its truth share and F1.
pub fn class_table_tsv<L: std::fmt::Display>(stats: &[ClassStats<L>]) -> String {
    let total: usize = stats.iter().map(|s| s.frequency).sum();
    let mut out = String::from("class\tfrequency\tshare\tprecision\trecall\tf1\n");
    for s in stats {
        let share = if total == 0 { 0.0 } else { s.frequency as f64 / total as f64 };
        out.push_str(&format!("{}\t{}\t{share}\t{}\t{}\t{}\n", s.class, s.frequency, s.precision, s.recall, s.f1));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Confusion<L> {
    pub truth: L,
    pub predicted: L,
    pub count: usize,
}

/// The `limit` most frequent wrong (truth, prediction) pairs.
pub fn top_confusions<L: Ord + Clone>(top1: &[Option<L>], truths: &[L], limit: usize) -> Vec<Confusion<L>> {
    let mut counts: BTreeMap<(L, L), usize> = BTreeMap::new();
    for (p, t) in top1.iter().zip(truths) {
        if let Some(p) = p.as_ref().filter(|p| *p != t) {
            *counts.entry((t.clone(), p.clone())).or_default() += 1;
        }
    }
    let mut out: Vec<_> = counts.into_iter().map(|((truth, predicted), count)| Confusion { truth, predicted, count }).collect();
    out.sort_by(|a, b| b.count.cmp(&a.count));
    out.truncate(limit);
    out
}
