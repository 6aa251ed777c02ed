//! Reduced search spaces and exact best-score construction from score tables.

mod build;
mod reduce;

pub use build::{build_top, enumerate_reduced, total_score, Built, ReducedArchs, DEFAULT_REDUCED_CAP};
pub use reduce::{hop_quotas, reduce_space, union_spaces, Provenance, ReducedSpace, Selection};

use crate::archspace::ArchError;

#[derive(Debug, thiserror::Error)]
pub enum BuildError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("mismatch: {0}")]
    Mismatch(String),
    #[error("requested {requested} architectures, only {found} valid combinations exist")]
    NotEnough { requested: usize, found: usize },
    #[error("parse: {0}")]
    Parse(String),
    #[error(transparent)]
    Arch(#[from] ArchError),
}
