//! Scores stage subgraphs by the norms a trained predictor assigns to them.

mod ensemble;
mod importance;
mod score;
mod stats;

pub use ensemble::{train_ensemble, Ensemble, EnsembleWeights};
pub use importance::{NUMERIC_GRID, feature_importance, CategoryImportance};
pub use score::{build_score_table, subgraph_raw_norms, ScoreMode, ScoreRow, ScoreTable, SCORE_CHUNK};
pub use stats::{fit_statistics, shift, shift_norm, HopStats, StageLabelEntry, StageLabelStats, DEFAULT_COUNT_FLOOR};

use crate::archspace::ArchError;
use crate::predictor::PredictorError;

#[derive(Debug, thiserror::Error)]
pub enum ScoreError {
    #[error("missing {0}")]
    MissingStats(&'static str),
    #[error("hop {hop} norms have zero spread")]
    ZeroSpread { hop: usize },
    #[error("label statistics for stage {stage} with {layers} layers are unusable")]
    UnusableStats { stage: usize, layers: usize },
    #[error("no confident predictor at hop {hop}")]
    NoConfidentPredictor { hop: usize },
    #[error("empty input set")]
    EmptySet,
    #[error("mismatch: {0}")]
    Mismatch(String),
    #[error("parse: {0}")]
    Parse(String),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error(transparent)]
    Arch(#[from] ArchError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
