//! Dense feed-forward networks with reverse-mode differentiation, a scalar
//! expression tape, and the Adam optimizer.

mod adam;
mod checkpoint;
mod graph;
mod network;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{read_network, write_network};
pub use graph::{Graph, Var};
pub use network::{Activation, DenseNetwork, GradientTape, Gradients, LayerShape};
pub(crate) use network::row;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value in network input")]
    NonFiniteInput,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("gradient tape is stale: network parameters changed after the forward pass")]
    StaleTape,
    #[error("network must have at least one layer")]
    EmptyNetwork,
    #[error("layer {layer} expects {expected} inputs but previous layer produces {found}")]
    BrokenChain {
        layer: usize,
        expected: usize,
        found: usize,
    },
    #[error("parameter buffer has {found} values, layout needs {expected}")]
    ParameterCount { expected: usize, found: usize },
    #[error("non-finite gradient; optimizer step skipped")]
    NonFiniteGradient,
    #[error("malformed network text at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}
