use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::stats::fit_statistics;
use super::ScoreError;
use crate::archspace::{Architecture, SearchSpace};
use crate::predictor::{eval_srcc, train, EncodedGraph, PredictorConfig, PredictorModel};

/// Per-member, per-hop combination weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleWeights {
    /// Held-out SRCC of each member's hop norms, `[member][hop]`.
    pub srcc: Vec<Vec<f64>>,
    /// SRCC clamped at zero and normalized to sum 1 over members at each hop.
    pub weights: Vec<Vec<f64>>,
}

impl EnsembleWeights {
    /// Hops where every member has non-positive SRCC get all-zero weights.
    pub fn from_srcc(srcc: Vec<Vec<f64>>) -> Self {
        let hops = srcc.first().map_or(0, Vec::len);
        let mut weights: Vec<Vec<f64>> = srcc.iter().map(|r| r.iter().map(|&s| s.max(0.0)).collect()).collect();
        for h in 0..hops {
            let total: f64 = weights.iter().map(|w| w[h]).sum();
            if total > 0.0 {
                for w in &mut weights {
                    w[h] /= total;
                }
            }
        }
        Self { srcc, weights }
    }

    pub fn uniform(members: usize, hops: usize) -> Self {
        let w = 1.0 / members as f64;
        Self { srcc: vec![vec![1.0; hops + 1]; members], weights: vec![vec![w; hops + 1]; members] }
    }
}

/// Cross-validated predictors with their combination weights.
#[derive(Clone, Debug)]
pub struct Ensemble {
    pub models: Vec<PredictorModel>,
    pub weights: EnsembleWeights,
}

impl Ensemble {
    pub fn members(&self) -> Vec<&PredictorModel> {
        self.models.iter().collect()
    }
}

/// Trains `folds` models per seed, each on all but one fold, and weights them
/// by their SRCC on the held-out fold.
pub fn train_ensemble(
    space: &SearchSpace,
    archs: &[Architecture],
    labels: &[f64],
    seeds: &[u64],
    folds: usize,
    config: &PredictorConfig,
    count_floor: usize,
) -> Result<Ensemble, ScoreError> {
    if folds < 2 || archs.len() < 2 * folds {
        return Err(ScoreError::Mismatch(format!("cannot split {} records into {folds} folds", archs.len())));
    }
    if archs.len() != labels.len() {
        return Err(ScoreError::Mismatch(format!("{} architectures vs {} labels", archs.len(), labels.len())));
    }
    let probe = PredictorModel::new(config, space.schema())?;
    let graphs: Vec<EncodedGraph> =
        archs.iter().map(|a| Ok(probe.encode(&space.assemble(a)?)?)).collect::<Result<_, ScoreError>>()?;

    let mut models = Vec::with_capacity(seeds.len() * folds);
    let mut srcc = Vec::with_capacity(seeds.len() * folds);
    for &seed in seeds {
        let mut order: Vec<usize> = (0..archs.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        for fold in 0..folds {
            let held: Vec<usize> = order.iter().copied().skip(fold).step_by(folds).collect();
            let kept: Vec<usize> = order.iter().copied().filter(|i| !held.contains(i)).collect();
            let pick_g = |ix: &[usize]| ix.iter().map(|&i| graphs[i].clone()).collect::<Vec<_>>();
            let pick_y = |ix: &[usize]| ix.iter().map(|&i| labels[i]).collect::<Vec<_>>();
            let (train_g, train_y) = (pick_g(&kept), pick_y(&kept));
            let (test_g, test_y) = (pick_g(&held), pick_y(&held));
            let cfg = PredictorConfig { seed: seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ fold as u64, ..config.clone() };
            let (mut model, _) = train(space.schema(), &train_g, &train_y, None, &cfg)?;
            let mut hop_srcc = eval_srcc(&model, &test_g, &test_y)?;
            hop_srcc.pop();
            log::info!("ensemble seed {seed} fold {fold}: held-out hop SRCC {hop_srcc:?}");
            let train_archs: Vec<Architecture> = kept.iter().map(|&i| archs[i].clone()).collect();
            fit_statistics(&mut model, space, &train_archs, &train_y, count_floor)?;
            models.push(model);
            srcc.push(hop_srcc);
        }
    }
    Ok(Ensemble { models, weights: EnsembleWeights::from_srcc(srcc) })
}
