//! Encoder-combiner-decoder multi-task networks: typed input encoders, a
//! concatenating combiner, and typed output decoders whose dependencies
//! form a DAG, including a tree-path sequence decoder.

mod config;
mod data;
mod embeddings;
mod model;
mod train;

use thiserror::Error;

pub use config::{
    validate_config, Activation, CombinerConfig, FeatureKind, Injection, InputFeature, ModelConfig, OutputFeature,
    Precision, TrainerConfig, INPUT_FIELDS, OUTPUT_FIELDS, TEXT_ENCODERS,
};
pub use data::{
    categorical_field, encode_inputs, encode_targets, text_tokens, InputValue, InputVocab, OutputSpace, TargetValue,
    TokenVocab, Vocabularies, UNKNOWN_TOKEN,
};
pub use embeddings::{embeddings_to_tsv, export_embeddings, EmbeddingKind};
pub use model::{masked_log_softmax, EcdModel, Example, Forward, PathHypothesis, Prediction};
pub use train::{accuracy, evaluation_loss, train, EpochRecord, History};

#[derive(Debug, Error)]
pub enum EcdError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("output dependencies form a cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("unknown {0}")]
    UnknownComponent(String),
    #[error("feature {0:?} has no embedding table")]
    NoEmbeddings(String),
    #[error("training split is empty")]
    EmptyTraining,
    #[error("loss became non-finite at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
    #[error(transparent)]
    Autodiff(#[from] crate::autodiff::AutodiffError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
