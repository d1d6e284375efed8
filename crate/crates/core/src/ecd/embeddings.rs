use super::config::FeatureKind;
use super::data::{InputVocab, OutputSpace};
use super::model::EcdModel;
use super::EcdError;
use crate::autodiff::Scalar;
use crate::corpus::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingKind {
    /// Token table of a text input.
    Word,
    /// Value table of a categorical input.
    Category,
    /// Columns of an output's final projection.
    OutputClass,
}

/// Labeled vectors from a learned table of the named feature.
pub fn export_embeddings<T: Scalar>(model: &EcdModel<T>, kind: EmbeddingKind, feature: &str) -> Result<Vec<(String, Vec<f64>)>, EcdError> {
    let tree = &model.vocab.tree;
    match kind {
        EmbeddingKind::Word | EmbeddingKind::Category => {
            let i = model
                .config
                .input_features
                .iter()
                .position(|f| f.name == feature)
                .ok_or_else(|| EcdError::Config(format!("no input feature {feature:?}")))?;
            let table = model.input_table(i).ok_or_else(|| EcdError::NoEmbeddings(feature.to_string()))?;
            let labels: Vec<String> = match (&model.vocab.inputs[i], kind) {
                (InputVocab::Tokens(v), EmbeddingKind::Word) => v.tokens().to_vec(),
                (InputVocab::Categories(c), EmbeddingKind::Category) => c.iter().cloned().chain(["<oov>".to_string()]).collect(),
                _ => return Err(EcdError::NoEmbeddings(feature.to_string())),
            };
            let t = model.store.get(table);
            Ok(labels.into_iter().enumerate().map(|(r, l)| (l, t.row(r).iter().map(|v| v.f64()).collect())).collect())
        }
        EmbeddingKind::OutputClass => {
            let i = model.config.output_index(feature).ok_or_else(|| EcdError::Config(format!("no output feature {feature:?}")))?;
            let o = &model.config.output_features[i];
            if matches!(o.kind, FeatureKind::Numeric | FeatureKind::Binary) {
                return Err(EcdError::NoEmbeddings(feature.to_string()));
            }
            let labels: Vec<String> = match &model.vocab.outputs[i] {
                OutputSpace::Classes(c) if feature == "contact_type" => c.iter().map(|&n| tree.id(NodeId(n)).to_string()).collect(),
                OutputSpace::Classes(c) => c.iter().map(|&t| model.vocab.template_ids.get(t).cloned().unwrap_or_else(|| t.to_string())).collect(),
                OutputSpace::Paths { node_count } => (0..*node_count).map(|n| tree.id(NodeId(n)).to_string()).chain(["<end>".to_string()]).collect(),
                OutputSpace::Value => return Err(EcdError::NoEmbeddings(feature.to_string())),
            };
            let w = model.store.get(model.output_weight(i));
            Ok(labels.into_iter().enumerate().map(|(c, l)| (l, (0..w.rows()).map(|r| w.at(r, c).f64()).collect())).collect())
        }
    }
}

/// One row per label: the label, then tab-separated values.
pub fn embeddings_to_tsv(rows: &[(String, Vec<f64>)]) -> String {
    let mut out = String::new();
    for (label, v) in rows {
        out.push_str(label);
        for x in v {
            out.push('\t');
            out.push_str(&x.to_string());
        }
        out.push('\n');
    }
    out
}
