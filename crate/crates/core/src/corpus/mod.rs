//! Ticket schema, the contact-type hierarchy, reply templates, dataset
//! loading/splitting and the synthetic corpus generator.

mod generate;
mod io;
mod split;
mod tree;

use std::collections::BTreeMap;
use std::collections::HashMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use generate::{generate_corpus, Corpus, GeneratorSpec};
pub use io::{
    load_corpus_dir, load_dataset, save_corpus_dir, write_dataset, DataFormat, LoadedDataset,
};
pub use split::{split_dataset, DatasetSplit};
pub use tree::{ContactTypeTree, NodeId, TreeFile, TreeFileNode};

/// Messages are capped at this many characters.
pub const MAX_MESSAGE_CHARS: usize = 1024;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("invalid contact-type tree: {0}")]
    InvalidTree(String),
    #[error("invalid template bank: {0}")]
    InvalidBank(String),
    #[error("missing required column {0:?}")]
    MissingColumn(String),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: unknown contact type {value:?}")]
    UnknownContactType { line: usize, value: String },
    #[error("line {line}: unknown reply template {value:?}")]
    UnknownTemplate { line: usize, value: String },
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("invalid ticket {id:?}: {reason}")]
    InvalidTicket { id: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// One support request as it arrives from the user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ticket {
    pub id: String,
    pub message: String,
    pub created_at: DateTime<Utc>,
    pub product_type: String,
    pub user_type: String,
    pub country: String,
    pub city: String,
    pub eta_minutes: Option<f64>,
    pub trip_status: String,
    pub has_trip: bool,
}

impl Ticket {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let fail = |reason: &str| {
            Err(CorpusError::InvalidTicket { id: self.id.clone(), reason: reason.to_string() })
        };
        if self.message.trim().is_empty() {
            return fail("message is empty");
        }
        if self.eta_minutes.is_some() && !self.has_trip {
            return fail("eta_minutes present without a trip");
        }
        if let Some(eta) = self.eta_minutes {
            if !eta.is_finite() || eta < 0.0 {
                return fail("eta_minutes must be finite and nonnegative");
            }
        }
        Ok(())
    }
}

/// Dense index into a [`ReplyTemplateBank`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TemplateId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTicket {
    pub ticket: Ticket,
    pub contact_type: NodeId,
    pub reply_template: TemplateId,
}

/// Canned replies and the contact types each one may answer.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplyTemplateBank {
    ids: Vec<String>,
    texts: Vec<String>,
    allowed_for: BTreeMap<NodeId, Vec<TemplateId>>,
    by_id: HashMap<String, TemplateId>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BankFile {
    pub templates: Vec<BankFileTemplate>,
    /// Contact-type id -> template ids.
    pub allowed_for: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BankFileTemplate {
    pub id: String,
    pub text: String,
}

impl ReplyTemplateBank {
    pub fn new(
        templates: Vec<(String, String)>,
        allowed_for: BTreeMap<NodeId, Vec<TemplateId>>,
    ) -> Result<Self, CorpusError> {
        let mut ids = Vec::with_capacity(templates.len());
        let mut texts = Vec::with_capacity(templates.len());
        let mut by_id = HashMap::new();
        for (id, text) in templates {
            if by_id.insert(id.clone(), TemplateId(ids.len())).is_some() {
                return Err(CorpusError::InvalidBank(format!("duplicate template id {id:?}")));
            }
            ids.push(id);
            texts.push(text);
        }
        for (node, list) in &allowed_for {
            if let Some(bad) = list.iter().find(|t| t.0 >= ids.len()) {
                return Err(CorpusError::InvalidBank(format!(
                    "allowed_for[{node}] references unknown template index {}",
                    bad.0
                )));
            }
        }
        Ok(Self { ids, texts, allowed_for, by_id })
    }

    pub fn from_file(file: BankFile, tree: &ContactTypeTree) -> Result<Self, CorpusError> {
        let templates: Vec<_> = file.templates.into_iter().map(|t| (t.id, t.text)).collect();
        let index: HashMap<&str, usize> =
            templates.iter().enumerate().map(|(i, (id, _))| (id.as_str(), i)).collect();
        let mut allowed = BTreeMap::new();
        for (ct, list) in &file.allowed_for {
            let node = tree.lookup(ct).ok_or_else(|| {
                CorpusError::InvalidBank(format!("allowed_for references unknown contact type {ct:?}"))
            })?;
            let ids = list
                .iter()
                .map(|t| {
                    index.get(t.as_str()).map(|&i| TemplateId(i)).ok_or_else(|| {
                        CorpusError::InvalidBank(format!("allowed_for[{ct}] references unknown template {t:?}"))
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            allowed.insert(node, ids);
        }
        Self::new(templates, allowed)
    }

    pub fn to_file(&self, tree: &ContactTypeTree) -> BankFile {
        BankFile {
            templates: self
                .ids
                .iter()
                .zip(&self.texts)
                .map(|(id, text)| BankFileTemplate { id: id.clone(), text: text.clone() })
                .collect(),
            allowed_for: self
                .allowed_for
                .iter()
                .map(|(n, l)| (tree.id(*n).to_string(), l.iter().map(|t| self.ids[t.0].clone()).collect()))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn templates(&self) -> impl Iterator<Item = TemplateId> {
        (0..self.ids.len()).map(TemplateId)
    }

    pub fn id(&self, t: TemplateId) -> &str {
        &self.ids[t.0]
    }

    pub fn text(&self, t: TemplateId) -> &str {
        &self.texts[t.0]
    }

    pub fn lookup(&self, id: &str) -> Option<TemplateId> {
        self.by_id.get(id).copied()
    }

    pub fn allowed_for(&self, node: NodeId) -> &[TemplateId] {
        self.allowed_for.get(&node).map_or(&[], Vec::as_slice)
    }

    pub fn is_allowed(&self, node: NodeId, t: TemplateId) -> bool {
        self.allowed_for(node).contains(&t)
    }

    /// Contact types that have at least one allowed template.
    pub fn contact_types(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.allowed_for.keys().copied()
    }
}

/// The two prediction targets of a ticket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    ContactType,
    ReplyTemplate,
}

impl Task {
    pub const ALL: [Task; 2] = [Task::ContactType, Task::ReplyTemplate];

    pub fn name(self) -> &'static str {
        match self {
            Task::ContactType => "contact_type",
            Task::ReplyTemplate => "reply_template",
        }
    }

    pub fn from_name(name: &str) -> Option<Task> {
        Task::ALL.into_iter().find(|t| t.name() == name)
    }

    /// Raw label index: the node index for contact types, the template
    /// index for reply templates.
    pub fn label(self, t: &LabeledTicket) -> usize {
        match self {
            Task::ContactType => t.contact_type.0,
            Task::ReplyTemplate => t.reply_template.0,
        }
    }
}

/// Checks every record against the ticket invariants, the tree and the bank.
pub fn validate_corpus(
    tree: &ContactTypeTree,
    bank: &ReplyTemplateBank,
    data: &[LabeledTicket],
) -> Result<(), CorpusError> {
    for lt in data {
        lt.ticket.validate()?;
        if !tree.contains(lt.contact_type) {
            return Err(CorpusError::InvalidTicket {
                id: lt.ticket.id.clone(),
                reason: format!("contact type {} not in tree", lt.contact_type),
            });
        }
        if lt.reply_template.0 >= bank.len() {
            return Err(CorpusError::InvalidTicket {
                id: lt.ticket.id.clone(),
                reason: format!("template index {} not in bank", lt.reply_template.0),
            });
        }
    }
    Ok(())
}
