//! Tensors, reverse-mode differentiation, ranking utilities and the AdamW optimizer.

mod autodiff;
mod optim;
mod rank;
mod tensor;

pub use autodiff::{Gradients, Graph, Var};
pub use optim::{AdamW, AdamWConfig};
pub use rank::{hard_rank, pearson, soft_rank, soft_rank_solution, soft_srcc, spearman, SoftRankSolution};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NumericsError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("rank term undefined: targets have zero variance")]
    DegenerateTargets,
    #[error("backward requires a scalar output, got shape {0:?}")]
    NonScalarOutput(Vec<usize>),
    #[error("non-finite value produced by {op} at node {node}")]
    NonFinite { node: usize, op: &'static str },
}
