//! Graph predictor whose per-hop embedding norms are trained to rank like the target.

mod batch;
mod checkpoint;
mod model;
mod train;

pub use batch::EncodedGraph;
pub use checkpoint::{CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use model::{Embedding, PredictorModel, Standardizer};
pub use train::{eval_srcc, train, TrainReport};

use serde::{Deserialize, Serialize};

use crate::archspace::ArchError;
use crate::numerics::{AdamWConfig, NumericsError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Mean,
    Sum,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// MSE plus the mean over hops of `1 - soft_srcc(norm, y)`.
    Ranked,
    MseOnly,
    /// MAE plus `1 - soft_srcc(prediction, y)`.
    MaeRank,
}

impl LossKind {
    pub fn has_rank_term(self) -> bool {
        !matches!(self, LossKind::MseOnly)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorConfig {
    /// Number of message-passing hops `M`.
    pub hops: usize,
    /// Hidden width `d` of the message-passing layers.
    pub hidden: usize,
    pub aggregation: Aggregation,
    pub loss: LossKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
    /// Soft-rank regularization strength.
    pub rank_eps: f64,
    pub seed: u64,
    /// Hidden width of each per-category feature network.
    pub femlp_hidden: usize,
    /// ReLU between the two feature-network layers.
    pub femlp_relu: bool,
    pub head_hidden: usize,
    pub leaky_slope: f64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            hops: 4,
            hidden: 32,
            aggregation: Aggregation::Mean,
            loss: LossKind::Ranked,
            epochs: 200,
            batch_size: 128,
            optimizer: AdamWConfig::default(),
            rank_eps: 1.0,
            seed: 0,
            femlp_hidden: 16,
            femlp_relu: false,
            head_hidden: 32,
            leaky_slope: 0.2,
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<(), PredictorError> {
        let bad = |m: &str| Err(PredictorError::InvalidConfig(m.into()));
        if self.hops < 1 {
            return bad("hops must be at least 1");
        }
        if self.hidden < 1 || self.femlp_hidden < 1 || self.head_hidden < 1 {
            return bad("layer widths must be at least 1");
        }
        if self.batch_size < 1 || (self.loss.has_rank_term() && self.batch_size < 2) {
            return bad("batch size must be at least 2 when the loss has a rank term");
        }
        if !(self.rank_eps > 0.0) {
            return bad("rank_eps must be positive");
        }
        if !(self.optimizer.lr > 0.0) {
            return bad("learning rate must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PredictorError {
    #[error("invalid predictor config: {0}")]
    InvalidConfig(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("labels are degenerate: {0}")]
    DegenerateLabels(String),
    #[error("need at least {needed} records, got {got}")]
    TooFewRecords { needed: usize, got: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Arch(#[from] ArchError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
