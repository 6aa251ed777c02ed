use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Layout, PredictorModel, Standardizer};
use super::{PredictorConfig, PredictorError};
use crate::archspace::FeatureSchema;
use crate::scorer::{HopStats, StageLabelStats};
use crate::Tensor;

pub const CHECKPOINT_FORMAT: &str = "autobuild-predictor";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    config: PredictorConfig,
    schema: FeatureSchema,
    schema_fingerprint: String,
    weights: BTreeMap<String, Tensor>,
    standardizer: Standardizer,
    hop_stats: Option<HopStats>,
    stage_stats: Option<StageLabelStats>,
}

impl PredictorModel {
    pub fn to_json(&self) -> String {
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            schema: self.schema.clone(),
            schema_fingerprint: self.schema.fingerprint(),
            weights: self.layout.names.iter().cloned().zip(self.params.iter().cloned()).collect(),
            standardizer: self.standardizer,
            hop_stats: self.hop_stats.clone(),
            stage_stats: self.stage_stats.clone(),
        };
        serde_json::to_string(&file).expect("checkpoint serializes")
    }

    /// Parses a checkpoint; with `expected` set, its schema must match exactly.
    pub fn from_json(text: &str, expected: Option<&FeatureSchema>) -> Result<Self, PredictorError> {
        let bad = |m: String| PredictorError::Checkpoint(m);
        let file: CheckpointFile = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        if file.format != CHECKPOINT_FORMAT {
            return Err(bad(format!("unknown format {}", file.format)));
        }
        if file.version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported version {} (expected {CHECKPOINT_VERSION})", file.version)));
        }
        if file.schema.fingerprint() != file.schema_fingerprint {
            return Err(bad("schema fingerprint does not match the stored schema".into()));
        }
        if let Some(schema) = expected {
            if schema.fingerprint() != file.schema_fingerprint {
                return Err(PredictorError::SchemaMismatch("checkpoint was trained on a different feature schema".into()));
            }
        }
        file.config.validate()?;
        let layout = Layout::new(&file.config, &file.schema)?;
        let mut weights = file.weights;
        let mut params = Vec::with_capacity(layout.names.len());
        for (name, shape) in layout.names.iter().zip(&layout.shapes) {
            let t = weights.remove(name).ok_or_else(|| bad(format!("missing weight {name}")))?;
            if t.shape() != shape || t.numel() != shape[0] * shape[1] {
                return Err(bad(format!("weight {name} has shape {:?}, expected {shape:?}", t.shape())));
            }
            if !t.is_finite() {
                return Err(bad(format!("weight {name} is not finite")));
            }
            params.push(t);
        }
        if let Some(extra) = weights.keys().next() {
            return Err(bad(format!("unexpected weight {extra}")));
        }
        Ok(Self {
            config: file.config,
            schema: file.schema,
            layout,
            params,
            standardizer: file.standardizer,
            hop_stats: file.hop_stats,
            stage_stats: file.stage_stats,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), PredictorError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path, expected: Option<&FeatureSchema>) -> Result<Self, PredictorError> {
        Self::from_json(&std::fs::read_to_string(path)?, expected)
    }
}
