//! Multi-objective evolutionary search over full or reduced spaces.

mod pareto;
mod search;

pub use pareto::{dominates, hypervolume, pareto_merge, Direction, FrontMember, ParetoFront};
pub use search::{run_ea, LogEntry, Mutation, SearchConfig, SearchDomain, SearchResult};

use crate::archspace::ArchError;
use crate::builder::BuildError;

#[derive(Debug, thiserror::Error)]
pub enum EvoError {
    #[error("invalid search config: {0}")]
    InvalidConfig(String),
    #[error("expected {expected} objectives, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("reference point: {0}")]
    Reference(String),
    #[error("no valid mutation: {0}")]
    NoMutation(String),
    #[error("evaluator failed on architecture {id:016x}: {msg}")]
    Evaluator { id: u64, msg: String },
    #[error(transparent)]
    Arch(#[from] ArchError),
    #[error(transparent)]
    Build(#[from] BuildError),
}
