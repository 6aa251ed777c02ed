//! Synthetic ground-truth benchmarks and target expressions over their metrics.

mod expr;
mod label;
mod oracle;

pub use expr::{parse_target, BinOp, Func, TargetExpr};
pub use label::{label_dataset, Target};
pub use oracle::{CostDef, OracleDef, SyntheticOracle, ORACLE_PRESETS, ORACLE_STAGE_CAP};

use crate::archspace::ArchError;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("syntax error at offset {offset}: {msg}")]
    Syntax { offset: usize, msg: String },
    #[error("unknown function {name:?} at offset {offset}")]
    UnknownFunction { name: String, offset: usize },
    #[error("unbound identifier {0:?}")]
    Unbound(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid oracle: {0}")]
    InvalidOracle(String),
    #[error("record {index}: {source}")]
    Record { index: usize, source: Box<BenchError> },
    #[error(transparent)]
    Arch(#[from] ArchError),
}

impl BenchError {
    /// Moves reported offsets by `by` bytes.
    pub(crate) fn shifted(self, by: usize) -> Self {
        match self {
            BenchError::Syntax { offset, msg } => BenchError::Syntax { offset: offset + by, msg },
            BenchError::UnknownFunction { name, offset } => BenchError::UnknownFunction { name, offset: offset + by },
            other => other,
        }
    }
}
