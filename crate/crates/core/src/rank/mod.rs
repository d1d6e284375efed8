//! Feature-engineered models: direct multi-class forests over topic
//! vectors, and pointwise ranking over (ticket, class) similarity pairs.

mod features;
mod pairs;
mod pipeline;
mod prototype;

use thiserror::Error;

pub use features::{categorical_value, TextModels, TicketEncoder, TicketVectors, CATEGORICAL_FIELDS};
pub use pairs::{make_pairs, pair_features, rank_classes, sort_scores, train_ranker, PairExample, PairIndex};
pub use pipeline::{
    multiclass_features, ticket_vectors, train_multiclass_baseline, train_v1, Formulation, TaskModel, V1Config,
    V1Model, V1Prediction,
};
pub use prototype::{build_prototypes, similarity_features, with_template_text, Prototype, PrototypeSet, SimilarityFeatures};

#[derive(Debug, Error)]
pub enum RankError {
    #[error("label space has a single class")]
    SingleClass,
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Dictionary(#[from] crate::textprep::DictionaryError),
    #[error(transparent)]
    Vectorize(#[from] crate::vectorize::VectorizeError),
    #[error(transparent)]
    Forest(#[from] crate::forest::ForestError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
