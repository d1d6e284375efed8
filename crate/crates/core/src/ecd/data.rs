use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::config::{FeatureKind, InputFeature, ModelConfig};
use super::EcdError;
use crate::corpus::{ContactTypeTree, LabeledTicket, ReplyTemplateBank, Ticket};
use crate::textprep::{encoder_words, strip_html};

pub const UNKNOWN_TOKEN: &str = "<unk>";

/// Token list with `<unk>` at index 0; the rest by descending training
/// frequency, ties alphabetical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenVocab {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl TokenVocab {
    pub fn fit<I: IntoIterator<Item = Vec<String>>>(docs: I, min_count: usize) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for doc in docs {
            for t in doc {
                *counts.entry(t).or_default() += 1;
            }
        }
        let mut kept: Vec<(String, usize)> = counts.into_iter().filter(|(_, c)| *c >= min_count.max(1)).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self::from_tokens(std::iter::once(UNKNOWN_TOKEN.to_string()).chain(kept.into_iter().map(|(t, _)| t)).collect())
    }

    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(0)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub(crate) fn reindex(&mut self) {
        *self = Self::from_tokens(std::mem::take(&mut self.tokens));
    }
}

/// Tokens a text encoder sees, capped at the feature's maximum length.
pub fn text_tokens(feature: &InputFeature, text: &str) -> Vec<String> {
    let cap = feature.effective_max_length();
    if feature.char_level() {
        strip_html(text).to_lowercase().chars().take(cap).map(String::from).collect()
    } else {
        let mut w = encoder_words(text);
        w.truncate(cap);
        w
    }
}

pub fn categorical_field<'a>(t: &'a Ticket, name: &str) -> &'a str {
    match name {
        "product_type" => &t.product_type,
        "user_type" => &t.user_type,
        "country" => &t.country,
        "city" => &t.city,
        "trip_status" => &t.trip_status,
        _ => panic!("{name} is not a categorical field"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InputVocab {
    Tokens(TokenVocab),
    /// Sorted training values; unseen values take the code `len`.
    Categories(Vec<String>),
    Plain,
}

/// Label space of one output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OutputSpace {
    /// Raw label ids indexed by class position.
    Classes(Vec<usize>),
    /// Tree nodes plus an end symbol at index `node_count`.
    Paths { node_count: usize },
    Value,
}

impl OutputSpace {
    pub fn classes(&self) -> Option<&[usize]> {
        match self {
            OutputSpace::Classes(c) => Some(c),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabularies {
    pub inputs: Vec<InputVocab>,
    pub outputs: Vec<OutputSpace>,
    pub tree: ContactTypeTree,
    /// Reply-template ids by template index.
    pub template_ids: Vec<String>,
}

impl Vocabularies {
    pub fn fit(config: &ModelConfig, train: &[LabeledTicket], tree: &ContactTypeTree, bank: &ReplyTemplateBank) -> Self {
        let inputs = config
            .input_features
            .iter()
            .map(|f| match f.kind {
                FeatureKind::Text => {
                    InputVocab::Tokens(TokenVocab::fit(train.iter().map(|t| text_tokens(f, &t.ticket.message)), f.min_count))
                }
                FeatureKind::Categorical => {
                    let mut v: Vec<String> = train.iter().map(|t| categorical_field(&t.ticket, &f.name).to_string()).collect();
                    v.sort();
                    v.dedup();
                    InputVocab::Categories(v)
                }
                _ => InputVocab::Plain,
            })
            .collect();
        let outputs = config
            .output_features
            .iter()
            .map(|o| match (o.name.as_str(), o.kind) {
                ("contact_type", FeatureKind::Sequence) => OutputSpace::Paths { node_count: tree.len() },
                ("contact_type", _) => OutputSpace::Classes(tree.nodes().filter(|&n| n != tree.root()).map(|n| n.0).collect()),
                ("reply_template", _) => OutputSpace::Classes((0..bank.len()).collect()),
                _ => OutputSpace::Value,
            })
            .collect();
        let template_ids = bank.templates().map(|t| bank.id(t).to_string()).collect();
        Self { inputs, outputs, tree: tree.clone(), template_ids }
    }

    pub(crate) fn reindex(&mut self) {
        for v in &mut self.inputs {
            if let InputVocab::Tokens(t) = v {
                t.reindex();
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InputValue {
    Tokens(Vec<usize>),
    Code(usize),
    Number(Option<f64>),
    Flag(bool),
}

#[derive(Debug, Clone, PartialEq)]
pub enum TargetValue {
    Class(usize),
    /// Root-anchored node path.
    Path(Vec<usize>),
    Number(f64),
    Flag(bool),
}

pub fn encode_inputs(config: &ModelConfig, vocab: &Vocabularies, t: &Ticket) -> Vec<InputValue> {
    config
        .input_features
        .iter()
        .zip(&vocab.inputs)
        .map(|(f, v)| match (f.kind, v) {
            (FeatureKind::Text, InputVocab::Tokens(tv)) => {
                InputValue::Tokens(text_tokens(f, &t.message).iter().map(|w| tv.index(w)).collect())
            }
            (FeatureKind::Categorical, InputVocab::Categories(c)) => {
                let value = categorical_field(t, &f.name);
                InputValue::Code(c.binary_search_by(|x| x.as_str().cmp(value)).unwrap_or(c.len()))
            }
            (FeatureKind::Numeric, _) => InputValue::Number(t.eta_minutes),
            (FeatureKind::Binary, _) => InputValue::Flag(t.has_trip),
            _ => unreachable!("vocabulary kinds follow the config"),
        })
        .collect()
}

pub fn encode_targets(config: &ModelConfig, vocab: &Vocabularies, t: &LabeledTicket) -> Result<Vec<TargetValue>, EcdError> {
    config
        .output_features
        .iter()
        .zip(&vocab.outputs)
        .map(|(o, space)| {
            Ok(match (o.name.as_str(), space) {
                ("contact_type", OutputSpace::Paths { .. }) => {
                    TargetValue::Path(vocab.tree.path_to(t.contact_type).into_iter().map(|n| n.0).collect())
                }
                (name, OutputSpace::Classes(c)) => {
                    let raw = if name == "contact_type" { t.contact_type.0 } else { t.reply_template.0 };
                    TargetValue::Class(
                        c.binary_search(&raw).map_err(|_| EcdError::Config(format!("{name} label {raw} outside the label space")))?,
                    )
                }
                ("eta_minutes", _) => TargetValue::Number(t.ticket.eta_minutes.unwrap_or(0.0)),
                ("has_trip", _) => TargetValue::Flag(t.ticket.has_trip),
                _ => unreachable!("validated output"),
            })
        })
        .collect()
}
