//! Macro search spaces: stages of variable-length layer sequences, their
//! module subgraphs, architecture graphs, counting, sampling and datasets.

mod arch;
mod dataset;
mod enumerate;
pub mod presets;
mod sample;
mod space;

pub use arch::{ArchGraph, Architecture, GraphNode, ModuleSubgraph};
pub use dataset::{metric_values, EncodedArch, Record};
pub use enumerate::{product, StageSubgraphs, DEFAULT_ENUM_CAP};
pub use sample::{SamplingMode, MAX_REJECTIONS};
pub use space::{
    AttrValue, Constraint, FeatureCategory, FeatureDef, FeatureKind, FeatureSchema, FeatureSource, LayerType,
    SearchSpace, SpaceFile, Stage, StageDef,
};

use serde::{Deserialize, Serialize};

/// Value of one feature category at one node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum FeatureValue {
    Choice(usize),
    Numeric(f64),
}

#[derive(Debug, thiserror::Error)]
pub enum ArchError {
    #[error("invalid space: {0}")]
    InvalidSpec(String),
    #[error("unknown stage {0}")]
    UnknownStage(usize),
    #[error("stage mismatch: {0}")]
    StageMismatch(String),
    #[error("constraint {rule} violated: {detail}")]
    ConstraintViolation { rule: &'static str, detail: String },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("enumeration of {count} items exceeds cap {cap}")]
    CapExceeded { count: String, cap: u64 },
    #[error("no valid architecture after {attempts} attempts")]
    SamplingExhausted { attempts: usize },
    #[error("stage {stage} has no layer type {name}")]
    UnknownLayerType { stage: usize, name: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
