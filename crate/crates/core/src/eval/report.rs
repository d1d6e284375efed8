use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{ContactTypeTree, NodeId, Task};

use super::metrics::{accuracy, accuracy_plus_parent, hits_at_k, per_class_f1, top_confusions, ClassStats, Confusion};
use super::{EvalError, PredictionRecord};

const CONFUSION_LIMIT: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputReport {
    pub accuracy: f64,
    pub hits_at_k: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy_plus_parent: Option<f64>,
    pub classes: Vec<ClassStats<String>>,
    pub confusions: Vec<Confusion<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ticket_count: usize,
    pub k: usize,
    pub outputs: BTreeMap<String, OutputReport>,
    /// Both tasks right at rank one; present when both tasks were scored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub combined_accuracy: Option<f64>,
}

/// Records of one task, ordered by ticket id.
pub(crate) fn task_records<'a>(records: &'a [PredictionRecord], task: &str) -> Result<Vec<&'a PredictionRecord>, EvalError> {
    let mut out: Vec<&PredictionRecord> = records.iter().filter(|r| r.task == task).collect();
    out.sort_by(|a, b| a.ticket_id.cmp(&b.ticket_id));
    if let Some(w) = out.windows(2).find(|w| w[0].ticket_id == w[1].ticket_id) {
        return Err(EvalError::Misaligned(format!("ticket {} appears twice for {task}", w[0].ticket_id)));
    }
    if let Some(r) = out.iter().find(|r| r.truth.is_none()) {
        return Err(EvalError::Misaligned(format!("ticket {} has no truth for {task}", r.ticket_id)));
    }
    Ok(out)
}

fn truth(r: &PredictionRecord) -> String {
    r.truth.clone().unwrap_or_default()
}

/// Per-ticket rank-one correctness for both tasks, aligned by ticket id.
pub fn combined_outcomes(records: &[PredictionRecord]) -> Result<Vec<bool>, EvalError> {
    let a = task_records(records, Task::ContactType.name())?;
    let b = task_records(records, Task::ReplyTemplate.name())?;
    if a.len() != b.len() || a.iter().zip(&b).any(|(x, y)| x.ticket_id != y.ticket_id) {
        return Err(EvalError::Misaligned("contact type and reply template records cover different tickets".into()));
    }
    Ok(a.iter().zip(&b).map(|(x, y)| top1_correct(x) && top1_correct(y)).collect())
}

pub(crate) fn top1_correct(r: &PredictionRecord) -> bool {
    r.ranking.first().map(|s| &s.label) == r.truth.as_ref()
}

/// Scores every task present in `records`. Contact-type labels are
/// resolved against `tree` (when given) for parent-tolerant accuracy.
pub fn evaluate(records: &[PredictionRecord], k: usize, tree: Option<&ContactTypeTree>) -> Result<EvalReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut tasks: Vec<&str> = records.iter().map(|r| r.task.as_str()).collect();
    tasks.sort_unstable();
    tasks.dedup();
    let mut outputs = BTreeMap::new();
    let mut ticket_count = 0;
    for task in tasks {
        let recs = task_records(records, task)?;
        ticket_count = ticket_count.max(recs.len());
        let preds: Vec<Vec<String>> = recs.iter().map(|r| r.labels()).collect();
        let truths: Vec<String> = recs.iter().map(|r| truth(r)).collect();
        let top1: Vec<Option<String>> = preds.iter().map(|p| p.first().cloned()).collect();
        let plus_parent = match tree {
            Some(tree) if task == Task::ContactType.name() => {
                let ids: HashMap<&str, NodeId> = tree.nodes().map(|n| (tree.id(n), n)).collect();
                let node = |l: &str| ids.get(l).copied().ok_or_else(|| EvalError::UnknownLabel(l.to_string()));
                let t = truths.iter().map(|l| node(l)).collect::<Result<Vec<_>, _>>()?;
                let p = preds
                    .iter()
                    .map(|p| p.first().map(|l| node(l)).transpose().map(|n| n.into_iter().collect()))
                    .collect::<Result<Vec<Vec<NodeId>>, _>>()?;
                Some(accuracy_plus_parent(&p, &t, tree)?)
            }
            _ => None,
        };
        outputs.insert(
            task.to_string(),
            OutputReport {
                accuracy: accuracy(&preds, &truths)?,
                hits_at_k: hits_at_k(&preds, &truths, k)?,
                accuracy_plus_parent: plus_parent,
                classes: per_class_f1(&top1, &truths)?,
                confusions: top_confusions(&top1, &truths, CONFUSION_LIMIT),
            },
        );
    }
    let combined_accuracy = if Task::ALL.iter().all(|t| outputs.contains_key(t.name())) {
        let o = combined_outcomes(records)?;
        Some(o.iter().filter(|&&b| b).count() as f64 / o.len() as f64)
    } else {
        None
    };
    Ok(EvalReport { ticket_count, k, outputs, combined_accuracy })
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Human-readable summary table.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "tickets: {}", self.ticket_count);
        let _ = writeln!(s, "{:<16} {:>9} {:>9} {:>11}", "output", "accuracy", format!("hits@{}", self.k), "accuracy+p");
        for (name, o) in &self.outputs {
            let p = o.accuracy_plus_parent.map_or("-".to_string(), |v| format!("{v:.4}"));
            let _ = writeln!(s, "{name:<16} {:>9.4} {:>9.4} {p:>11}", o.accuracy, o.hits_at_k);
        }
        if let Some(c) = self.combined_accuracy {
            let _ = writeln!(s, "combined accuracy: {c:.4}");
        }
        for (name, o) in &self.outputs {
            if o.confusions.is_empty() {
                continue;
            }
            let _ = writeln!(s, "\n{name}: most frequent confusions");
            for c in &o.confusions {
                let _ = writeln!(s, "  {} -> {}: {}", c.truth, c.predicted, c.count);
            }
        }
        s
    }
}
