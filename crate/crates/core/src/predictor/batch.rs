use std::rc::Rc;

use super::{Aggregation, PredictorError};
use crate::archspace::{ArchGraph, FeatureKind, FeatureSchema, FeatureValue};
use crate::Tensor;

#[derive(Clone, Debug)]
pub(crate) enum FeatureColumn {
    Choices(Vec<usize>),
    /// Values rescaled to [0, 1] by the schema range.
    Values(Vec<f64>),
}

/// Schema-checked node features and message-passing edges of one graph.
#[derive(Clone, Debug)]
pub struct EncodedGraph {
    pub(crate) nodes: usize,
    pub(crate) columns: Vec<FeatureColumn>,
    /// `(source, destination)` pairs: incoming edges plus one self loop per node, grouped by destination.
    pub(crate) edges: Vec<(usize, usize)>,
}

impl EncodedGraph {
    pub fn new(graph: &ArchGraph, schema: &FeatureSchema) -> Result<Self, PredictorError> {
        let nodes = graph.num_nodes();
        let mut columns: Vec<FeatureColumn> = schema
            .categories
            .iter()
            .map(|c| match c.kind {
                FeatureKind::Categorical { .. } => FeatureColumn::Choices(Vec::with_capacity(nodes)),
                FeatureKind::Numeric { .. } => FeatureColumn::Values(Vec::with_capacity(nodes)),
            })
            .collect();
        for node in graph.nodes() {
            schema.check(&node.features).map_err(|e| PredictorError::SchemaMismatch(e.to_string()))?;
            for ((col, value), cat) in columns.iter_mut().zip(&node.features).zip(&schema.categories) {
                match (col, value, &cat.kind) {
                    (FeatureColumn::Choices(v), FeatureValue::Choice(i), _) => v.push(*i),
                    (FeatureColumn::Values(v), FeatureValue::Numeric(x), FeatureKind::Numeric { min, max }) => {
                        v.push((x - min) / (max - min))
                    }
                    _ => unreachable!("schema check guarantees matching kinds"),
                }
            }
        }
        let mut edges: Vec<(usize, usize)> = graph.edges().to_vec();
        edges.extend((0..nodes).map(|i| (i, i)));
        edges.sort_by_key(|&(s, t)| (t, s));
        Ok(Self { nodes, columns, edges })
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes
    }
}

/// Disjoint union of several encoded graphs.
pub(crate) struct Batch {
    pub nodes: usize,
    pub graphs: usize,
    pub columns: Vec<BatchColumn>,
    pub src: Rc<[usize]>,
    pub dst: Rc<[usize]>,
    pub node_graph: Rc<[usize]>,
    /// Per-node aggregation weight: `1 / n_g` for mean, 1 for sum.
    pub node_weight: Tensor,
    /// First node index of each graph.
    pub offsets: Vec<usize>,
}

pub(crate) enum BatchColumn {
    Choices(Rc<[usize]>),
    Values(Tensor),
}

impl Batch {
    pub fn new(graphs: &[&EncodedGraph], aggregation: Aggregation) -> Self {
        let nodes: usize = graphs.iter().map(|g| g.nodes).sum();
        let width = graphs.first().map_or(0, |g| g.columns.len());
        let mut choice_cols: Vec<Vec<usize>> = vec![Vec::new(); width];
        let mut value_cols: Vec<Vec<f64>> = vec![Vec::new(); width];
        let mut src = Vec::new();
        let mut dst = Vec::new();
        let mut node_graph = Vec::with_capacity(nodes);
        let mut node_weight = Vec::with_capacity(nodes);
        let mut offsets = Vec::with_capacity(graphs.len());
        let mut offset = 0;
        for (gi, g) in graphs.iter().enumerate() {
            offsets.push(offset);
            for (k, col) in g.columns.iter().enumerate() {
                match col {
                    FeatureColumn::Choices(v) => choice_cols[k].extend_from_slice(v),
                    FeatureColumn::Values(v) => value_cols[k].extend_from_slice(v),
                }
            }
            for &(s, t) in &g.edges {
                src.push(s + offset);
                dst.push(t + offset);
            }
            let w = match aggregation {
                Aggregation::Mean => 1.0 / g.nodes as f64,
                Aggregation::Sum => 1.0,
            };
            node_graph.extend(std::iter::repeat_n(gi, g.nodes));
            node_weight.extend(std::iter::repeat_n(w, g.nodes));
            offset += g.nodes;
        }
        let columns = graphs
            .first()
            .map(|g| {
                g.columns
                    .iter()
                    .enumerate()
                    .map(|(k, c)| match c {
                        FeatureColumn::Choices(_) => BatchColumn::Choices(Rc::from(std::mem::take(&mut choice_cols[k]))),
                        FeatureColumn::Values(_) => BatchColumn::Values(Tensor::column(std::mem::take(&mut value_cols[k]))),
                    })
                    .collect()
            })
            .unwrap_or_default();
        Self {
            nodes,
            graphs: graphs.len(),
            columns,
            src: Rc::from(src),
            dst: Rc::from(dst),
            node_graph: Rc::from(node_graph),
            node_weight: Tensor::column(node_weight),
            offsets,
        }
    }
}
