//! Support-ticket triage: contact-type and reply-template suggestion with a
//! feature-engineered ranking pipeline and an encoder-combiner-decoder
//! multi-task network, plus evaluation and a suggestion service.

pub mod autodiff;
pub mod corpus;
pub mod ecd;
pub mod eval;
pub mod experiment;
pub mod forest;
pub mod rank;
pub mod serve;
pub mod textprep;
pub mod vectorize;
