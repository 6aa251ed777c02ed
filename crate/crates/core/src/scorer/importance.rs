use serde::{Deserialize, Serialize};

use super::ScoreError;
use crate::archspace::{FeatureKind, FeatureValue};
use crate::predictor::PredictorModel;

/// Points on which a numeric category is probed.
pub const NUMERIC_GRID: usize = 11;

/// Magnitudes the feature network assigns to each value of one category.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryImportance {
    pub name: String,
    /// `(value label, |FE-MLP output|)` per choice or grid point.
    pub values: Vec<(String, f64)>,
    pub range: f64,
    pub mean: f64,
    pub std: f64,
}

pub fn feature_importance(model: &PredictorModel) -> Result<Vec<CategoryImportance>, ScoreError> {
    let mut out = Vec::new();
    for (k, cat) in model.schema().categories.iter().enumerate() {
        let probes: Vec<(String, FeatureValue)> = match &cat.kind {
            FeatureKind::Categorical { choices } => {
                choices.iter().enumerate().map(|(i, c)| (c.clone(), FeatureValue::Choice(i))).collect()
            }
            FeatureKind::Numeric { min, max } => (0..NUMERIC_GRID)
                .map(|i| {
                    let x = min + (max - min) * i as f64 / (NUMERIC_GRID - 1) as f64;
                    (format!("{x}"), FeatureValue::Numeric(x))
                })
                .collect(),
        };
        let values = probes
            .into_iter()
            .map(|(label, v)| Ok((label, model.femlp_scalar(k, v)?.abs())))
            .collect::<Result<Vec<_>, ScoreError>>()?;
        let n = values.len() as f64;
        let mean = values.iter().map(|v| v.1).sum::<f64>() / n;
        let std = (values.iter().map(|v| (v.1 - mean).powi(2)).sum::<f64>() / n).sqrt();
        let lo = values.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
        let hi = values.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
        out.push(CategoryImportance { name: cat.name.clone(), values, range: hi - lo, mean, std });
    }
    Ok(out)
}
