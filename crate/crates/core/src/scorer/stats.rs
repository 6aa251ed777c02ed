use serde::{Deserialize, Serialize};

use super::ScoreError;
use crate::archspace::{Architecture, SearchSpace};
use crate::predictor::{EncodedGraph, PredictorModel};

/// Default minimum number of labels behind a usable (stage, layers) entry.
pub const DEFAULT_COUNT_FLOOR: usize = 30;

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean and population standard deviation of node-embedding L1 norms per hop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HopStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl HopStats {
    pub fn compute(model: &PredictorModel, graphs: &[EncodedGraph]) -> Result<Self, ScoreError> {
        if graphs.is_empty() {
            return Err(ScoreError::EmptySet);
        }
        let emb = model.embed(graphs);
        let mut mean = Vec::with_capacity(model.hops() + 1);
        let mut std = Vec::with_capacity(model.hops() + 1);
        for m in 0..=model.hops() {
            let norms: Vec<f64> = emb.iter().flat_map(|e| e.node_norms(m)).collect();
            let (mu, sigma) = mean_std(&norms);
            mean.push(mu);
            std.push(sigma);
        }
        Ok(Self { mean, std })
    }

    pub fn hops(&self) -> usize {
        self.mean.len().saturating_sub(1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageLabelEntry {
    pub stage: usize,
    pub layers: usize,
    pub mean: f64,
    pub std: f64,
    pub count: usize,
    pub usable: bool,
}

/// Label statistics of architectures grouped by the layer count of each stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageLabelStats {
    pub floor: usize,
    /// One entry per (stage, layer count) admitted by the space, stage-major.
    pub entries: Vec<StageLabelEntry>,
}

impl StageLabelStats {
    pub fn compute(
        space: &SearchSpace,
        archs: &[Architecture],
        labels: &[f64],
        floor: usize,
    ) -> Result<Self, ScoreError> {
        if archs.len() != labels.len() {
            return Err(ScoreError::Mismatch(format!("{} architectures vs {} labels", archs.len(), labels.len())));
        }
        let mut entries = Vec::new();
        for (u, stage) in space.stages().iter().enumerate() {
            for l in stage.l_min..=stage.l_max {
                let ys: Vec<f64> = archs
                    .iter()
                    .zip(labels)
                    .filter(|(a, _)| a.stages.get(u).is_some_and(|s| s.len() == l))
                    .map(|(_, &y)| y)
                    .collect();
                let (mean, std) = if ys.is_empty() { (0.0, 0.0) } else { mean_std(&ys) };
                entries.push(StageLabelEntry {
                    stage: u,
                    layers: l,
                    mean,
                    std,
                    count: ys.len(),
                    usable: ys.len() >= floor && std > 0.0,
                });
            }
        }
        Ok(Self { floor, entries })
    }

    pub fn get(&self, stage: usize, layers: usize) -> Option<&StageLabelEntry> {
        self.entries.iter().find(|e| e.stage == stage && e.layers == layers)
    }
}

/// Affine map of a hop-`m` norm onto the label distribution of its (stage, layers) group.
pub fn shift(norm: f64, mu_h: f64, sigma_h: f64, mu_y: f64, sigma_y: f64) -> f64 {
    (norm - mu_h) * (sigma_y / sigma_h) + mu_y
}

/// [`shift`] with statistics looked up and checked.
pub fn shift_norm(
    norm: f64,
    hop: usize,
    stage: usize,
    layers: usize,
    hop_stats: &HopStats,
    stage_stats: &StageLabelStats,
) -> Result<f64, ScoreError> {
    let (mu_h, sigma_h) = match (hop_stats.mean.get(hop), hop_stats.std.get(hop)) {
        (Some(&m), Some(&s)) => (m, s),
        _ => return Err(ScoreError::MissingStats("hop statistics for this hop")),
    };
    if !(sigma_h > 0.0) {
        return Err(ScoreError::ZeroSpread { hop });
    }
    let entry = stage_stats
        .get(stage, layers)
        .filter(|e| e.usable)
        .ok_or(ScoreError::UnusableStats { stage, layers })?;
    Ok(shift(norm, mu_h, sigma_h, entry.mean, entry.std))
}

/// Computes and stores hop and stage label statistics from a model's training set.
pub fn fit_statistics(
    model: &mut PredictorModel,
    space: &SearchSpace,
    archs: &[Architecture],
    labels: &[f64],
    floor: usize,
) -> Result<(), ScoreError> {
    let graphs = archs
        .iter()
        .map(|a| Ok(model.encode(&space.assemble(a)?)?))
        .collect::<Result<Vec<_>, ScoreError>>()?;
    model.hop_stats = Some(HopStats::compute(model, &graphs)?);
    model.stage_stats = Some(StageLabelStats::compute(space, archs, labels, floor)?);
    Ok(())
}
