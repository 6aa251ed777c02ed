use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::batch::{Batch, BatchColumn, EncodedGraph};
use super::{PredictorConfig, PredictorError};
use crate::archspace::{ArchGraph, FeatureKind, FeatureSchema, FeatureValue};
use crate::numerics::Var;
use crate::scorer::{HopStats, StageLabelStats};
use crate::{Graph, Tensor};

/// Graphs per forward pass during inference.
const INFERENCE_CHUNK: usize = 256;

/// Train-split label mean and standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: f64,
    pub std: f64,
}

impl Standardizer {
    /// Population statistics; a zero spread falls back to unit scale.
    pub fn fit(labels: &[f64]) -> Self {
        let n = labels.len().max(1) as f64;
        let mean = labels.iter().sum::<f64>() / n;
        let var = labels.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
        let std = if var > 0.0 { var.sqrt() } else { 1.0 };
        Self { mean, std }
    }

    pub fn forward(&self, y: f64) -> f64 {
        (y - self.mean) / self.std
    }

    pub fn inverse(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

#[derive(Clone, Debug)]
pub(crate) struct FeLayout {
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct HopLayout {
    pub ws: usize,
    pub bs: usize,
    pub wt: usize,
    pub bt: usize,
    pub att: usize,
    pub bias: usize,
    pub proj: Option<usize>,
}

#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub fe: Vec<FeLayout>,
    pub hops: Vec<HopLayout>,
    pub head: FeLayout,
    pub names: Vec<String>,
    pub shapes: Vec<[usize; 2]>,
    /// Fan-in used for initialization.
    pub fan_in: Vec<usize>,
}

impl Layout {
    pub fn new(config: &PredictorConfig, schema: &FeatureSchema) -> Result<Self, PredictorError> {
        if schema.is_empty() {
            return Err(PredictorError::SchemaMismatch("schema has no feature categories".into()));
        }
        let mut names = Vec::new();
        let mut shapes = Vec::new();
        let mut fan_in = Vec::new();
        let mut add = |name: String, shape: [usize; 2], fan: usize| {
            names.push(name);
            shapes.push(shape);
            fan_in.push(fan);
            names.len() - 1
        };
        let fh = config.femlp_hidden;
        let mut fe = Vec::new();
        for cat in &schema.categories {
            let inputs = match &cat.kind {
                FeatureKind::Categorical { choices } => choices.len(),
                FeatureKind::Numeric { .. } => 1,
            };
            let p = format!("femlp.{}", cat.name);
            fe.push(FeLayout {
                w1: add(format!("{p}.w1"), [inputs, fh], inputs),
                b1: add(format!("{p}.b1"), [1, fh], inputs),
                w2: add(format!("{p}.w2"), [fh, 1], fh),
                b2: add(format!("{p}.b2"), [1, 1], fh),
            });
        }
        let d = config.hidden;
        let mut hops = Vec::new();
        let mut width = schema.len();
        for m in 1..=config.hops {
            let p = format!("hop{m}");
            hops.push(HopLayout {
                ws: add(format!("{p}.w_dst"), [width, d], width),
                bs: add(format!("{p}.b_dst"), [1, d], width),
                wt: add(format!("{p}.w_src"), [width, d], width),
                bt: add(format!("{p}.b_src"), [1, d], width),
                att: add(format!("{p}.att"), [d, 1], d),
                bias: add(format!("{p}.bias"), [1, d], d),
                proj: (width != d).then(|| add(format!("{p}.w_res"), [width, d], width)),
            });
            width = d;
        }
        let hh = config.head_hidden;
        let head = FeLayout {
            w1: add("head.w1".into(), [d, hh], d),
            b1: add("head.b1".into(), [1, hh], d),
            w2: add("head.w2".into(), [hh, 1], hh),
            b2: add("head.b2".into(), [1, 1], hh),
        };
        Ok(Self { fe, hops, head, names, shapes, fan_in })
    }
}

/// Per-graph outputs of a forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    /// Node embeddings per hop, `[nodes, width]`.
    pub nodes: Vec<Tensor>,
    /// Aggregated graph embedding per hop.
    pub graph: Vec<Vec<f64>>,
    /// L1 norm of each graph embedding.
    pub graph_norms: Vec<f64>,
    /// Prediction in label units.
    pub prediction: f64,
}

impl Embedding {
    /// L1 norms of every node embedding at `hop`.
    pub fn node_norms(&self, hop: usize) -> Vec<f64> {
        let t = &self.nodes[hop];
        (0..t.rows()).map(|r| t.row_slice(r).iter().map(|x| x.abs()).sum()).collect()
    }
}

pub(crate) struct Forward {
    pub node_h: Vec<Var>,
    pub graph_h: Vec<Var>,
    pub norms: Vec<Var>,
    pub pred: Var,
}

/// FE-MLP, attention hops and regression head with their training statistics.
#[derive(Clone, Debug)]
pub struct PredictorModel {
    pub(crate) config: PredictorConfig,
    pub(crate) schema: FeatureSchema,
    pub(crate) layout: Layout,
    pub(crate) params: Vec<Tensor>,
    pub standardizer: Standardizer,
    pub hop_stats: Option<HopStats>,
    pub stage_stats: Option<StageLabelStats>,
}

impl PredictorModel {
    /// Freshly initialized weights, uniform in ±1/√fan_in.
    pub fn new(config: &PredictorConfig, schema: &FeatureSchema) -> Result<Self, PredictorError> {
        config.validate()?;
        let layout = Layout::new(config, schema)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = layout
            .shapes
            .iter()
            .zip(&layout.fan_in)
            .map(|(&[r, c], &fan)| {
                let bound = 1.0 / (fan as f64).sqrt();
                Tensor::matrix(r, c, (0..r * c).map(|_| rng.random_range(-bound..bound)).collect())
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            schema: schema.clone(),
            layout,
            params,
            standardizer: Standardizer { mean: 0.0, std: 1.0 },
            hop_stats: None,
            stage_stats: None,
        })
    }

    pub fn config(&self) -> &PredictorConfig {
        &self.config
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn hops(&self) -> usize {
        self.config.hops
    }

    pub fn param_names(&self) -> &[String] {
        &self.layout.names
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.layout.names.iter().position(|n| n == name).map(|i| &self.params[i])
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.layout.names.iter().position(|n| n == name).map(|i| &mut self.params[i])
    }

    pub fn encode(&self, graph: &ArchGraph) -> Result<EncodedGraph, PredictorError> {
        EncodedGraph::new(graph, &self.schema)
    }

    pub fn encode_all(&self, graphs: &[ArchGraph]) -> Result<Vec<EncodedGraph>, PredictorError> {
        graphs.iter().map(|g| self.encode(g)).collect()
    }

    pub(crate) fn forward(&self, g: &mut Graph, p: &[Var], b: &Batch) -> Forward {
        let cfg = &self.config;
        let mut scalars = Vec::with_capacity(b.columns.len());
        for (col, fe) in b.columns.iter().zip(&self.layout.fe) {
            let h = match col {
                BatchColumn::Choices(idx) => g.gather_rows(p[fe.w1], idx.clone()),
                BatchColumn::Values(x) => {
                    let x = g.constant(x.clone());
                    g.matmul(x, p[fe.w1])
                }
            };
            let h = g.add_row(h, p[fe.b1]);
            let h = if cfg.femlp_relu { g.relu(h) } else { h };
            let s = g.matmul(h, p[fe.w2]);
            scalars.push(g.add_row(s, p[fe.b2]));
        }
        let h0 = g.concat_cols(&scalars);
        let mut node_h = vec![g.abs(h0)];

        for hop in &self.layout.hops {
            let h = *node_h.last().expect("hop 0 present");
            let s = g.matmul(h, p[hop.ws]);
            let s = g.add_row(s, p[hop.bs]);
            let t = g.matmul(h, p[hop.wt]);
            let t = g.add_row(t, p[hop.bt]);
            let u = g.attention(s, t, p[hop.att], b.src.clone(), b.dst.clone(), b.nodes, cfg.leaky_slope);
            let u = g.add_row(u, p[hop.bias]);
            let act = g.relu(u);
            let res = match hop.proj {
                Some(w) => g.matmul(h, p[w]),
                None => h,
            };
            node_h.push(g.add(act, res));
        }

        let weight = g.constant(b.node_weight.clone());
        let mut graph_h = Vec::with_capacity(node_h.len());
        let mut norms = Vec::with_capacity(node_h.len());
        for &h in &node_h {
            let hw = g.mul_col(h, weight);
            let hg = g.scatter_add_rows(hw, b.node_graph.clone(), b.graphs);
            let a = g.abs(hg);
            norms.push(g.sum_cols(a));
            graph_h.push(hg);
        }

        let head = &self.layout.head;
        let last = *graph_h.last().expect("at least one hop");
        let z = g.matmul(last, p[head.w1]);
        let z = g.add_row(z, p[head.b1]);
        let z = g.relu(z);
        let y = g.matmul(z, p[head.w2]);
        let pred = g.add_row(y, p[head.b2]);
        Forward { node_h, graph_h, norms, pred }
    }

    /// Forward pass without gradient tracking.
    pub fn embed(&self, graphs: &[EncodedGraph]) -> Vec<Embedding> {
        let mut out = Vec::with_capacity(graphs.len());
        for chunk in graphs.chunks(INFERENCE_CHUNK) {
            let refs: Vec<&EncodedGraph> = chunk.iter().collect();
            let batch = Batch::new(&refs, self.config.aggregation);
            let mut g = Graph::new();
            let p: Vec<Var> = self.params.iter().map(|t| g.constant(t.clone())).collect();
            let f = self.forward(&mut g, &p, &batch);
            for (gi, enc) in chunk.iter().enumerate() {
                let start = batch.offsets[gi];
                let nodes = f
                    .node_h
                    .iter()
                    .map(|&v| {
                        let t = g.value(v);
                        let w = t.cols();
                        Tensor::matrix(enc.nodes, w, t.data()[start * w..(start + enc.nodes) * w].to_vec())
                    })
                    .collect();
                let graph = f.graph_h.iter().map(|&v| g.value(v).row_slice(gi).to_vec()).collect();
                let graph_norms = f.norms.iter().map(|&v| g.value(v).data()[gi]).collect();
                let prediction = self.standardizer.inverse(g.value(f.pred).data()[gi]);
                out.push(Embedding { nodes, graph, graph_norms, prediction });
            }
        }
        out
    }

    pub fn embed_graphs(&self, graphs: &[ArchGraph]) -> Result<Vec<Embedding>, PredictorError> {
        Ok(self.embed(&self.encode_all(graphs)?))
    }

    pub fn predict(&self, graphs: &[ArchGraph]) -> Result<Vec<f64>, PredictorError> {
        Ok(self.embed_graphs(graphs)?.into_iter().map(|e| e.prediction).collect())
    }

    /// Signed FE-MLP output for one value of category `k`.
    pub fn femlp_scalar(&self, k: usize, value: FeatureValue) -> Result<f64, PredictorError> {
        let cat = self
            .schema
            .categories
            .get(k)
            .ok_or_else(|| PredictorError::SchemaMismatch(format!("no feature category {k}")))?;
        let fe = &self.layout.fe[k];
        let w1 = &self.params[fe.w1];
        let mut h: Vec<f64> = match (&cat.kind, value) {
            (FeatureKind::Categorical { choices }, FeatureValue::Choice(i)) if i < choices.len() => {
                w1.row_slice(i).to_vec()
            }
            (FeatureKind::Numeric { min, max }, FeatureValue::Numeric(x)) if x.is_finite() => {
                let x = (x - min) / (max - min);
                w1.row_slice(0).iter().map(|w| w * x).collect()
            }
            _ => {
                return Err(PredictorError::SchemaMismatch(format!(
                    "value {value:?} does not fit category {}",
                    cat.name
                )))
            }
        };
        for (v, b) in h.iter_mut().zip(self.params[fe.b1].data()) {
            *v += b;
            if self.config.femlp_relu && *v < 0.0 {
                *v = 0.0;
            }
        }
        let w2 = self.params[fe.w2].data();
        Ok(h.iter().zip(w2).map(|(a, b)| a * b).sum::<f64>() + self.params[fe.b2].data()[0])
    }

    /// The 0-hop node embedding: per-category FE-MLP scalars through abs.
    pub fn femlp_embed(&self, features: &[FeatureValue]) -> Result<Vec<f64>, PredictorError> {
        self.schema.check(features).map_err(|e| PredictorError::SchemaMismatch(e.to_string()))?;
        features
            .iter()
            .enumerate()
            .map(|(k, &v)| self.femlp_scalar(k, v).map(f64::abs))
            .collect()
    }
}
