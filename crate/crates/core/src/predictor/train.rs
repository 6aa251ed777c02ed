use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::batch::{Batch, EncodedGraph};
use super::model::{PredictorModel, Standardizer};
use super::{LossKind, PredictorConfig, PredictorError};
use crate::archspace::FeatureSchema;
use crate::numerics::{spearman, Var};
use crate::{AdamW, Graph, Tensor};

/// Outcome of a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean batch loss per epoch.
    pub epoch_loss: Vec<f64>,
    /// SRCC of hop norms 0..=M followed by the prediction SRCC, on the training set.
    pub train_srcc: Vec<f64>,
    /// Same layout as `train_srcc`, on the held-out set when one was given.
    pub test_srcc: Option<Vec<f64>>,
    /// Batches whose rank terms were skipped (size 1 or constant labels).
    pub skipped_rank_batches: usize,
    pub wall_time_secs: f64,
    pub seed: u64,
}

impl PredictorModel {
    /// Builds the batch loss on a tape; labels are already standardized.
    fn loss_on_tape(
        &self,
        g: &mut Graph,
        p: &[Var],
        batch: &Batch,
        y_std: &[f64],
    ) -> Result<(Var, bool), PredictorError> {
        let f = self.forward(g, p, batch);
        let target = g.constant(Tensor::column(y_std.to_vec()));
        let diff = g.sub(f.pred, target);
        let distinct = y_std.iter().any(|&y| y != y_std[0]);
        let rank_ok = y_std.len() >= 2 && distinct;
        let eps = self.config.rank_eps;
        let loss = match self.config.loss {
            LossKind::MseOnly => {
                let sq = g.square(diff);
                g.mean_all(sq)
            }
            LossKind::Ranked => {
                let sq = g.square(diff);
                let mut loss = g.mean_all(sq);
                if rank_ok {
                    let m1 = f.norms.len() as f64;
                    for &norm in &f.norms {
                        let rho = g.soft_srcc(norm, y_std, eps)?;
                        let term = g.scale(rho, -1.0 / m1);
                        let term = g.add_scalar(term, 1.0 / m1);
                        loss = g.add(loss, term);
                    }
                }
                loss
            }
            LossKind::MaeRank => {
                let ab = g.abs(diff);
                let mut loss = g.mean_all(ab);
                if rank_ok {
                    let rho = g.soft_srcc(f.pred, y_std, eps)?;
                    let term = g.scale(rho, -1.0);
                    let term = g.add_scalar(term, 1.0);
                    loss = g.add(loss, term);
                }
                loss
            }
        };
        Ok((loss, rank_ok || !self.config.loss.has_rank_term()))
    }

    /// Loss and parameter gradients on one batch with labels in label units.
    pub fn loss_and_grad(&self, graphs: &[EncodedGraph], labels: &[f64]) -> Result<(f64, Vec<Tensor>), PredictorError> {
        let refs: Vec<&EncodedGraph> = graphs.iter().collect();
        let batch = Batch::new(&refs, self.config.aggregation);
        let y: Vec<f64> = labels.iter().map(|&v| self.standardizer.forward(v)).collect();
        let mut g = Graph::new();
        let p: Vec<Var> = self.params.iter().map(|t| g.param(t.clone())).collect();
        let (loss, _) = self.loss_on_tape(&mut g, &p, &batch, &y)?;
        let value = g.value(loss).data()[0];
        let mut grads = g.backward(loss)?;
        let grads = p.iter().map(|&v| grads.take(v).expect("gradient per parameter")).collect();
        Ok((value, grads))
    }
}

fn check_labels(labels: &[f64], config: &PredictorConfig) -> Result<(), PredictorError> {
    if let Some(bad) = labels.iter().find(|y| !y.is_finite()) {
        return Err(PredictorError::DegenerateLabels(format!("non-finite label {bad}")));
    }
    if config.loss.has_rank_term() && labels.iter().all(|&y| y == labels[0]) {
        return Err(PredictorError::DegenerateLabels("all labels are equal".into()));
    }
    Ok(())
}

/// Trains a fresh model; `test` is only used for the final report.
pub fn train(
    schema: &FeatureSchema,
    graphs: &[EncodedGraph],
    labels: &[f64],
    test: Option<(&[EncodedGraph], &[f64])>,
    config: &PredictorConfig,
) -> Result<(PredictorModel, TrainReport), PredictorError> {
    let start = Instant::now();
    config.validate()?;
    if graphs.len() < 2 {
        return Err(PredictorError::TooFewRecords { needed: 2, got: graphs.len() });
    }
    if graphs.len() != labels.len() {
        return Err(PredictorError::SchemaMismatch(format!("{} graphs vs {} labels", graphs.len(), labels.len())));
    }
    check_labels(labels, config)?;

    let mut model = PredictorModel::new(config, schema)?;
    model.standardizer = Standardizer::fit(labels);
    let y_std: Vec<f64> = labels.iter().map(|&y| model.standardizer.forward(y)).collect();

    let mut opt = AdamW::new(config.optimizer);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_5eed_5eed_5eed);
    let mut order: Vec<usize> = (0..graphs.len()).collect();
    let mut epoch_loss = Vec::with_capacity(config.epochs);
    let mut skipped = 0;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(config.batch_size) {
            let refs: Vec<&EncodedGraph> = chunk.iter().map(|&i| &graphs[i]).collect();
            let y: Vec<f64> = chunk.iter().map(|&i| y_std[i]).collect();
            let batch = Batch::new(&refs, config.aggregation);
            let mut g = Graph::new();
            let p: Vec<Var> = model.params.iter().map(|t| g.param(t.clone())).collect();
            let (loss, rank_ok) = model.loss_on_tape(&mut g, &p, &batch, &y)?;
            if !rank_ok {
                skipped += 1;
                if y.len() >= 2 {
                    log::warn!("epoch {epoch}: batch with constant labels, rank terms skipped");
                }
            }
            total += g.value(loss).data()[0];
            batches += 1;
            let mut grads = g.backward(loss)?;
            let grads: Vec<Tensor> = p.iter().map(|&v| grads.take(v).expect("gradient per parameter")).collect();
            let mut params: Vec<&mut Tensor> = model.params.iter_mut().collect();
            let grad_refs: Vec<&Tensor> = grads.iter().collect();
            opt.step(&mut params, &grad_refs)?;
        }
        let mean = total / batches as f64;
        log::debug!("epoch {epoch}: loss {mean:.6}");
        epoch_loss.push(mean);
    }

    let train_srcc = eval_srcc(&model, graphs, labels)?;
    let test_srcc = match test {
        Some((tg, ty)) => Some(eval_srcc(&model, tg, ty)?),
        None => None,
    };
    let report = TrainReport {
        epoch_loss,
        train_srcc,
        test_srcc,
        skipped_rank_batches: skipped,
        wall_time_secs: start.elapsed().as_secs_f64(),
        seed: config.seed,
    };
    Ok((model, report))
}

/// Exact Spearman correlation of each hop's graph-embedding norm with the
/// labels, followed by that of the predictions; undefined values report 0.
pub fn eval_srcc(model: &PredictorModel, graphs: &[EncodedGraph], labels: &[f64]) -> Result<Vec<f64>, PredictorError> {
    if graphs.len() < 2 {
        return Err(PredictorError::TooFewRecords { needed: 2, got: graphs.len() });
    }
    if graphs.len() != labels.len() {
        return Err(PredictorError::SchemaMismatch(format!("{} graphs vs {} labels", graphs.len(), labels.len())));
    }
    let emb = model.embed(graphs);
    let mut out = Vec::with_capacity(model.hops() + 2);
    for m in 0..=model.hops() {
        let norms: Vec<f64> = emb.iter().map(|e| e.graph_norms[m]).collect();
        out.push(spearman(&norms, labels).unwrap_or(0.0));
    }
    let preds: Vec<f64> = emb.iter().map(|e| e.prediction).collect();
    out.push(spearman(&preds, labels).unwrap_or(0.0));
    Ok(out)
}
