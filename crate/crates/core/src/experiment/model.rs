use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{ContactTypeTree, LabeledTicket, NodeId, ReplyTemplateBank, Task, TemplateId, Ticket};
use crate::ecd::{EcdModel, Precision, Prediction};
use crate::eval::{PredictionRecord, ScoredLabel};
use crate::rank::V1Model;
use crate::serve::{Predictor, Suggestions};

use super::ExperimentError;

const KIND_FILE: &str = "family.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelKind {
    family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    precision: Option<Precision>,
}

/// Any trained model family.
pub enum TrainedModel {
    V1(V1Model),
    EcdF32(EcdModel<f32>),
    EcdF64(EcdModel<f64>),
}

impl TrainedModel {
    pub fn save(&self, dir: &Path, family: &str) -> Result<(), ExperimentError> {
        let precision = match self {
            TrainedModel::V1(m) => {
                m.save(dir)?;
                None
            }
            TrainedModel::EcdF32(m) => {
                m.save(dir)?;
                Some(Precision::F32)
            }
            TrainedModel::EcdF64(m) => {
                m.save(dir)?;
                Some(Precision::F64)
            }
        };
        let kind = ModelKind { family: family.to_string(), precision };
        fs::write(dir.join(KIND_FILE), serde_json::to_string_pretty(&kind)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(dir.join(KIND_FILE))
            .map_err(|e| ExperimentError::Data(format!("no trained model in {}: {e}", dir.display())))?;
        let kind: ModelKind = serde_json::from_str(&text)?;
        Ok(match (kind.family.starts_with("v1"), kind.precision) {
            (true, _) => TrainedModel::V1(V1Model::load(dir)?),
            (false, Some(Precision::F64)) => TrainedModel::EcdF64(EcdModel::load(dir)?),
            (false, _) => TrainedModel::EcdF32(EcdModel::load(dir)?),
        })
    }

    /// Top-`k` contact types and reply templates per ticket, as raw indices.
    pub fn rank(&self, tickets: &[&Ticket], k: usize) -> Result<Vec<Vec<(Task, Vec<(usize, f64)>)>>, ExperimentError> {
        match self {
            TrainedModel::V1(m) => Ok(tickets.par_iter().map(|t| m.predict(t, k)).collect::<Result<Vec<_>, _>>()?),
            TrainedModel::EcdF32(m) => Ok(ecd_rankings(&m.config.output_features, m.predict_topk(tickets, k)?)),
            TrainedModel::EcdF64(m) => Ok(ecd_rankings(&m.config.output_features, m.predict_topk(tickets, k)?)),
        }
    }
}

fn ecd_rankings(outputs: &[crate::ecd::OutputFeature], preds: Vec<Vec<Prediction>>) -> Vec<Vec<(Task, Vec<(usize, f64)>)>> {
    preds
        .into_iter()
        .map(|row| {
            outputs
                .iter()
                .zip(row)
                .filter_map(|(o, p)| Some((Task::from_name(&o.name)?, p.ranked().to_vec())))
                .collect()
        })
        .collect()
}

/// A trained model bound to its label space; what the service and the
/// commands predict with.
pub struct LabeledModel {
    pub model: TrainedModel,
    pub tree: ContactTypeTree,
    pub bank: ReplyTemplateBank,
    pub version: String,
}

impl LabeledModel {
    pub fn load(model_dir: &Path, tree: ContactTypeTree, bank: ReplyTemplateBank) -> Result<Self, ExperimentError> {
        let version = dir_digest(model_dir)?;
        Ok(Self { model: TrainedModel::load(model_dir)?, tree, bank, version })
    }

    fn label(&self, task: Task, raw: usize) -> String {
        match task {
            Task::ContactType => self.tree.id(NodeId(raw)).to_string(),
            Task::ReplyTemplate => self.bank.id(TemplateId(raw)).to_string(),
        }
    }

    pub fn suggest(&self, tickets: &[&Ticket], k: usize) -> Result<Vec<Suggestions>, ExperimentError> {
        let ranked = self.model.rank(tickets, k)?;
        Ok(ranked
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|(task, list)| {
                        let labels = list.into_iter().map(|(raw, score)| ScoredLabel { label: self.label(task, raw), score }).collect();
                        (task.name().to_string(), labels)
                    })
                    .collect()
            })
            .collect())
    }

    /// Prediction dump records for labeled tickets, truths included.
    pub fn records(&self, data: &[LabeledTicket], k: usize) -> Result<Vec<PredictionRecord>, ExperimentError> {
        let tickets: Vec<&Ticket> = data.iter().map(|t| &t.ticket).collect();
        let suggestions = self.suggest(&tickets, k)?;
        let mut out = Vec::with_capacity(data.len() * 2);
        for (lt, s) in data.iter().zip(suggestions) {
            for (task, ranking) in s {
                let t = Task::from_name(&task).expect("task name");
                out.push(PredictionRecord {
                    ticket_id: lt.ticket.id.clone(),
                    task,
                    ranking,
                    truth: Some(self.label(t, t.label(lt))),
                });
            }
        }
        Ok(out)
    }
}

impl Predictor for LabeledModel {
    fn version(&self) -> String {
        self.version.clone()
    }

    fn predict(&self, ticket: &Ticket, k: usize) -> Result<Suggestions, String> {
        self.suggest(&[ticket], k).map(|mut v| v.remove(0)).map_err(|e| e.to_string())
    }
}

/// Short content digest of every file in a directory, in name order.
pub fn dir_digest(dir: &Path) -> Result<String, ExperimentError> {
    let mut names: Vec<_> = fs::read_dir(dir)?.filter_map(|e| e.ok()).filter(|e| e.path().is_file()).map(|e| e.file_name()).collect();
    names.sort();
    let mut h = Sha256::new();
    for n in names {
        h.update(n.as_encoded_bytes());
        h.update([0u8]);
        h.update(fs::read(dir.join(&n))?);
    }
    Ok(h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect())
}
