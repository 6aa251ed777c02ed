use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::stats::shift_norm;
use super::{EnsembleWeights, ScoreError};
use crate::archspace::{ModuleSubgraph, SearchSpace};
use crate::predictor::{EncodedGraph, PredictorModel};

/// Subgraphs embedded per inference pass while building tables.
pub const SCORE_CHUNK: usize = 2048;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScoreMode {
    /// The terminal node norm as is.
    #[default]
    #[serde(rename = "raw")]
    Raw,
    /// Norm mapped onto the label distribution of its (stage, layers) group.
    #[serde(rename = "shifted")]
    Shifted,
    /// Norm standardized with the training-set statistics of its hop.
    #[serde(rename = "zscore")]
    ZScore,
    /// Norm standardized with the statistics of the scored subgraphs of the same stage and hop.
    #[serde(rename = "zscore-enum")]
    ZScoreEnumerated,
}

impl ScoreMode {
    pub const ALL: [ScoreMode; 4] = [ScoreMode::Raw, ScoreMode::Shifted, ScoreMode::ZScore, ScoreMode::ZScoreEnumerated];

    pub fn as_str(self) -> &'static str {
        match self {
            ScoreMode::Raw => "raw",
            ScoreMode::Shifted => "shifted",
            ScoreMode::ZScore => "zscore",
            ScoreMode::ZScoreEnumerated => "zscore-enum",
        }
    }
}

impl fmt::Display for ScoreMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoreMode {
    type Err = ScoreError;

    fn from_str(s: &str) -> Result<Self, ScoreError> {
        ScoreMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| ScoreError::Parse(format!("unknown score mode {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub subgraph: ModuleSubgraph,
    pub id: u64,
    /// Hop whose node embedding produced the norm.
    pub hop: usize,
    pub raw_norm: f64,
    pub score: f64,
}

/// Scores of every subgraph of every stage, rows sorted by canonical id.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreTable {
    /// Fingerprint of the space whose subgraphs were scored.
    pub fingerprint: String,
    pub mode: ScoreMode,
    pub stages: Vec<Vec<ScoreRow>>,
}

/// L1 norm of the terminal node of each subgraph at hop `min(len - 1, M)`, scored in isolation.
pub fn subgraph_raw_norms(
    model: &PredictorModel,
    space: &SearchSpace,
    subs: &[ModuleSubgraph],
) -> Result<Vec<(usize, f64)>, ScoreError> {
    let mut out = Vec::with_capacity(subs.len());
    for chunk in subs.chunks(SCORE_CHUNK) {
        let encoded: Vec<EncodedGraph> = chunk
            .iter()
            .map(|s| Ok(model.encode(&space.subgraph_graph(s)?)?))
            .collect::<Result<_, ScoreError>>()?;
        for (sub, emb) in chunk.iter().zip(model.embed(&encoded)) {
            if sub.is_empty() {
                return Err(ScoreError::Mismatch(format!("stage {} subgraph has no layers", sub.stage)));
            }
            let hop = (sub.len() - 1).min(model.hops());
            let last = emb.nodes[hop].row_slice(sub.len() - 1).iter().map(|x| x.abs()).sum();
            out.push((hop, last));
        }
    }
    Ok(out)
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Scores of one model for one stage in the order of `subs`.
fn model_scores(
    model: &PredictorModel,
    space: &SearchSpace,
    subs: &[ModuleSubgraph],
    mode: ScoreMode,
) -> Result<Vec<(usize, f64, f64)>, ScoreError> {
    let raw = subgraph_raw_norms(model, space, subs)?;
    let mut out = Vec::with_capacity(raw.len());
    match mode {
        ScoreMode::Raw => out.extend(raw.iter().map(|&(h, r)| (h, r, r))),
        ScoreMode::Shifted => {
            let hs = model.hop_stats.as_ref().ok_or(ScoreError::MissingStats("hop statistics in the model"))?;
            let ss = model.stage_stats.as_ref().ok_or(ScoreError::MissingStats("stage label statistics in the model"))?;
            for (sub, &(h, r)) in subs.iter().zip(&raw) {
                out.push((h, r, shift_norm(r, h, sub.stage, sub.len(), hs, ss)?));
            }
        }
        ScoreMode::ZScore => {
            let hs = model.hop_stats.as_ref().ok_or(ScoreError::MissingStats("hop statistics in the model"))?;
            for &(h, r) in &raw {
                let (mu, sigma) = match (hs.mean.get(h), hs.std.get(h)) {
                    (Some(&m), Some(&s)) => (m, s),
                    _ => return Err(ScoreError::MissingStats("hop statistics for this hop")),
                };
                if !(sigma > 0.0) {
                    return Err(ScoreError::ZeroSpread { hop: h });
                }
                out.push((h, r, (r - mu) / sigma));
            }
        }
        ScoreMode::ZScoreEnumerated => {
            for hop in 0..=model.hops() {
                let vals = raw.iter().filter(|(h, _)| *h == hop).map(|&(_, r)| r);
                if vals.clone().count() == 0 {
                    continue;
                }
                let (_, sigma) = mean_std(vals);
                if !(sigma > 0.0) {
                    return Err(ScoreError::ZeroSpread { hop });
                }
            }
            let stats: Vec<(f64, f64)> = (0..=model.hops())
                .map(|hop| mean_std(raw.iter().filter(move |(h, _)| *h == hop).map(|&(_, r)| r)))
                .collect();
            out.extend(raw.iter().map(|&(h, r)| (h, r, (r - stats[h].0) / stats[h].1)));
        }
    }
    Ok(out)
}

/// Scores every subgraph of every stage with one model, or with a weighted ensemble.
///
/// With several models `weights` is required; each hop combines member scores
/// with that hop's weights.
pub fn build_score_table(
    space: &SearchSpace,
    models: &[&PredictorModel],
    weights: Option<&EnsembleWeights>,
    mode: ScoreMode,
    cap: u64,
) -> Result<ScoreTable, ScoreError> {
    let first = *models.first().ok_or(ScoreError::EmptySet)?;
    for m in models {
        if m.schema().fingerprint() != space.schema().fingerprint() {
            return Err(ScoreError::Mismatch("predictor schema does not match the search space".into()));
        }
        if m.hops() != first.hops() {
            return Err(ScoreError::Mismatch("ensemble members differ in hop count".into()));
        }
    }
    let owned;
    let weights = match weights {
        Some(w) => w,
        None if models.len() == 1 => {
            owned = EnsembleWeights::uniform(1, first.hops());
            &owned
        }
        None => return Err(ScoreError::MissingStats("ensemble weights")),
    };
    if weights.weights.len() != models.len() || weights.weights.iter().any(|w| w.len() != first.hops() + 1) {
        return Err(ScoreError::Mismatch(format!(
            "weights cover {} models, ensemble has {} with {} hops",
            weights.weights.len(),
            models.len(),
            first.hops()
        )));
    }

    let mut stages = Vec::with_capacity(space.num_stages());
    for u in 0..space.num_stages() {
        let subs: Vec<ModuleSubgraph> = space.enumerate_stage_subgraphs(u, cap)?.collect();
        let per_model: Vec<Vec<(usize, f64, f64)>> = models
            .iter()
            .map(|m| model_scores(m, space, &subs, mode))
            .collect::<Result<_, _>>()?;
        let mut rows = Vec::with_capacity(subs.len());
        for (i, sub) in subs.into_iter().enumerate() {
            let hop = per_model[0][i].0;
            if weights.weights.iter().map(|w| w[hop]).sum::<f64>() <= 0.0 {
                return Err(ScoreError::NoConfidentPredictor { hop });
            }
            let (mut raw, mut score) = (0.0, 0.0);
            for (w, scores) in weights.weights.iter().zip(&per_model) {
                raw += w[hop] * scores[i].1;
                score += w[hop] * scores[i].2;
            }
            let id = space.subgraph_id(&sub)?;
            rows.push(ScoreRow { subgraph: sub, id, hop, raw_norm: raw, score });
        }
        stages.push(rows);
    }
    Ok(ScoreTable { fingerprint: space.fingerprint().into(), mode, stages })
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    stage: usize,
    subgraph_id: u64,
    layer_sequence: String,
    hop: usize,
    raw_norm: String,
    score: String,
    mode: String,
}

fn sig17(x: f64) -> String {
    format!("{x:.16e}")
}

impl ScoreTable {
    pub fn row(&self, sub: &ModuleSubgraph, space: &SearchSpace) -> Option<&ScoreRow> {
        let id = space.subgraph_id(sub).ok()?;
        let rows = self.stages.get(sub.stage)?;
        rows.binary_search_by_key(&id, |r| r.id).ok().map(|i| &rows[i])
    }

    pub fn score(&self, sub: &ModuleSubgraph, space: &SearchSpace) -> Option<f64> {
        self.row(sub, space).map(|r| r.score)
    }

    pub fn num_rows(&self) -> usize {
        self.stages.iter().map(Vec::len).sum()
    }

    /// Writes `stage,subgraph_id,layer_sequence,hop,raw_norm,score,mode` rows.
    pub fn write_csv<W: Write>(&self, space: &SearchSpace, out: W) -> Result<(), ScoreError> {
        let mut w = csv::Writer::from_writer(out);
        for rows in &self.stages {
            for r in rows {
                w.serialize(CsvRow {
                    stage: r.subgraph.stage,
                    subgraph_id: r.id,
                    layer_sequence: space.describe_subgraph(&r.subgraph),
                    hop: r.hop,
                    raw_norm: sig17(r.raw_norm),
                    score: sig17(r.score),
                    mode: self.mode.to_string(),
                })
                .map_err(|e| ScoreError::Parse(e.to_string()))?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a table written by [`ScoreTable::write_csv`] for the same space.
    pub fn read_csv<R: Read>(space: &SearchSpace, input: R) -> Result<Self, ScoreError> {
        let mut r = csv::Reader::from_reader(input);
        let mut stages: Vec<Vec<ScoreRow>> = vec![Vec::new(); space.num_stages()];
        let mut mode = None;
        for (i, rec) in r.deserialize::<CsvRow>().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| ScoreError::Parse(format!("line {line}: {e}")))?;
            let m: ScoreMode = rec.mode.parse()?;
            if *mode.get_or_insert(m) != m {
                return Err(ScoreError::Parse(format!("line {line}: mixed score modes")));
            }
            let sub = space.subgraph_from_id(rec.stage, rec.subgraph_id)?;
            if space.describe_subgraph(&sub) != rec.layer_sequence {
                return Err(ScoreError::Mismatch(format!(
                    "line {line}: id {} is {} in this space, not {}",
                    rec.subgraph_id,
                    space.describe_subgraph(&sub),
                    rec.layer_sequence
                )));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| ScoreError::Parse(format!("line {line}: {e}")));
            stages[rec.stage].push(ScoreRow {
                subgraph: sub,
                id: rec.subgraph_id,
                hop: rec.hop,
                raw_norm: num(&rec.raw_norm)?,
                score: num(&rec.score)?,
            });
        }
        for rows in &mut stages {
            rows.sort_by_key(|r| r.id);
            if rows.windows(2).any(|w| w[0].id == w[1].id) {
                return Err(ScoreError::Parse("duplicate subgraph id".into()));
            }
        }
        Ok(Self { fingerprint: space.fingerprint().into(), mode: mode.unwrap_or_default(), stages })
    }
}
