//! TF-IDF weighting and latent semantic analysis.

mod lsa;
mod sparse;
pub mod svd;
mod tfidf;

use thiserror::Error;

pub use lsa::{choose_rank, fit_lsa, lsa_topics, project_lsa, LsaModel, LsaOptions, LsaVector, Topic};
pub use sparse::{cosine_dense, cosine_sparse, SparseVector};
pub use tfidf::{fit_tfidf, transform_tfidf, TfIdfModel};

#[derive(Debug, Error)]
pub enum VectorizeError {
    #[error("cannot fit on an empty corpus")]
    EmptyCorpus,
    #[error("term-document matrix is all zeros")]
    Degenerate,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("model format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
