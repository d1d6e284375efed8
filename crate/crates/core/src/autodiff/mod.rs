//! Dense reverse-mode automatic differentiation with the layers and
//! optimizer used by the encoder-combiner-decoder models.

mod adam;
mod backward;
mod graph;
pub mod nn;
mod params;
mod tensor;

use thiserror::Error;

pub use adam::{AdamConfig, AdamState};
pub use graph::{Graph, SeqLayout, Var};
pub use params::{Param, ParamId, ParamStore};
pub use tensor::{Scalar, Tensor};

#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    Shape { op: &'static str, left: Vec<usize>, right: Vec<usize> },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("{0} produced a non-finite value")]
    NonFinite(&'static str),
    #[error("{0}")]
    Invalid(String),
    #[error("checkpoint format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Every differentiable operator, including the recurrent cells built from
/// primitives. The gradient-check suite must cover each entry.
pub const OP_REGISTRY: &[&str] = &[
    "matmul",
    "add",
    "sub",
    "mul",
    "add_bias",
    "scale",
    "concat",
    "slice_cols",
    "reshape",
    "embedding",
    "conv1d",
    "max_pool_over_time",
    "time_step",
    "reverse_seq",
    "where_rows",
    "sigmoid",
    "tanh",
    "relu",
    "softmax",
    "dropout",
    "batch_norm",
    "cross_entropy",
    "binary_cross_entropy",
    "mean_squared_error",
    "sum",
    "weighted_sum",
    "rnn_simple",
    "rnn_lstm",
    "rnn_gru",
];
