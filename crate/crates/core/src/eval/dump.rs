use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredLabel {
    pub label: String,
    pub score: f64,
}

/// One line of a prediction dump: a ranked list for one ticket and task.
///
/// Readers ignore unknown fields, so richer logs that embed these fields
/// (such as the serving audit log) load as dumps too.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub ticket_id: String,
    pub task: String,
    pub ranking: Vec<ScoredLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<String>,
}

impl PredictionRecord {
    pub fn labels(&self) -> Vec<String> {
        self.ranking.iter().map(|s| s.label.clone()).collect()
    }
}

pub fn write_dump<W: Write>(mut w: W, records: &[PredictionRecord]) -> Result<(), EvalError> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dump<R: BufRead>(r: R) -> Result<Vec<PredictionRecord>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| EvalError::Dump { line: i + 1, message: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}

/// Tab-separated form: one row per ranked entry.
pub fn write_dump_delimited<W: Write>(w: W, records: &[PredictionRecord]) -> Result<(), EvalError> {
    let mut csv = csv::WriterBuilder::new().delimiter(b'\t').from_writer(w);
    csv.write_record(["ticket_id", "task", "rank", "label", "score", "truth"])?;
    for r in records {
        for (rank, s) in r.ranking.iter().enumerate() {
            let rank = (rank + 1).to_string();
            let score = s.score.to_string();
            let truth = r.truth.as_deref().unwrap_or("");
            csv.write_record([r.ticket_id.as_str(), r.task.as_str(), &rank, &s.label, &score, truth])?;
        }
    }
    csv.flush()?;
    Ok(())
}
