use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::space::{Constraint, FeatureSource, SearchSpace};
use super::{ArchError, FeatureValue};
use crate::hash::Hasher;

/// The layer sequence of one stage; `layers` index into the stage vocabulary.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModuleSubgraph {
    pub stage: usize,
    pub layers: Vec<usize>,
}

impl ModuleSubgraph {
    pub fn new(stage: usize, layers: Vec<usize>) -> Self {
        Self { stage, layers }
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Hop level whose terminal-node embedding covers the whole subgraph.
    pub fn hop(&self) -> usize {
        self.layers.len().saturating_sub(1)
    }
}

/// One module subgraph per stage.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Architecture {
    pub stages: Vec<ModuleSubgraph>,
}

impl Architecture {
    pub fn new(stages: Vec<ModuleSubgraph>) -> Self {
        Self { stages }
    }

    pub fn num_layers(&self) -> usize {
        self.stages.iter().map(ModuleSubgraph::len).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub features: Vec<FeatureValue>,
}

/// Directed acyclic graph with per-node features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchGraph {
    nodes: Vec<GraphNode>,
    edges: Vec<(usize, usize)>,
    id: u64,
}

impl ArchGraph {
    /// Builds a graph from arbitrary nodes and edges, rejecting cycles.
    pub fn from_parts(nodes: Vec<GraphNode>, edges: Vec<(usize, usize)>) -> Result<Self, ArchError> {
        let n = nodes.len();
        if n == 0 {
            return Err(ArchError::InvalidGraph("graph has no nodes".into()));
        }
        let mut indegree = vec![0usize; n];
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(s, t) in &edges {
            if s >= n || t >= n {
                return Err(ArchError::InvalidGraph(format!("edge ({s}, {t}) out of range")));
            }
            if s == t {
                return Err(ArchError::InvalidGraph(format!("self loop on node {s}")));
            }
            indegree[t] += 1;
            out[s].push(t);
        }
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut visited = 0;
        while let Some(v) = queue.pop_front() {
            visited += 1;
            for &t in &out[v] {
                indegree[t] -= 1;
                if indegree[t] == 0 {
                    queue.push_back(t);
                }
            }
        }
        if visited != n {
            return Err(ArchError::InvalidGraph("graph contains a cycle".into()));
        }
        let id = content_hash(&nodes, &edges);
        Ok(Self { nodes, edges, id })
    }

    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Stable content hash over features and edges.
    pub fn id(&self) -> u64 {
        self.id
    }
}

fn content_hash(nodes: &[GraphNode], edges: &[(usize, usize)]) -> u64 {
    let mut h = Hasher::new();
    h.u64(nodes.len() as u64);
    for node in nodes {
        h.u64(node.features.len() as u64);
        for f in &node.features {
            match *f {
                FeatureValue::Choice(i) => h.u64(0).u64(i as u64),
                FeatureValue::Numeric(x) => h.u64(1).f64(x),
            };
        }
    }
    h.u64(edges.len() as u64);
    for &(s, t) in edges {
        h.u64(s as u64).u64(t as u64);
    }
    h.finish_u64()
}

impl SearchSpace {
    /// Checks stage membership and layer bounds of one subgraph.
    pub fn check_subgraph(&self, sub: &ModuleSubgraph) -> Result<(), ArchError> {
        let stage = self.stage(sub.stage)?;
        let l = sub.layers.len();
        if l < stage.l_min || l > stage.l_max {
            return Err(ArchError::StageMismatch(format!(
                "stage {} has {l} layers, allowed [{}, {}]",
                sub.stage, stage.l_min, stage.l_max
            )));
        }
        if let Some(&bad) = sub.layers.iter().find(|&&c| c >= stage.vocab.len()) {
            return Err(ArchError::StageMismatch(format!(
                "stage {} has no vocabulary entry {bad}",
                sub.stage
            )));
        }
        Ok(())
    }

    /// Whether a subgraph can appear in some valid architecture, judged from its own stage alone.
    pub fn subgraph_feasible(&self, sub: &ModuleSubgraph) -> bool {
        if self.check_subgraph(sub).is_err() {
            return false;
        }
        let vocab = &self.stages()[sub.stage].vocab;
        self.constraints().iter().enumerate().all(|(c, rule)| {
            let applies = match rule {
                Constraint::ChannelConsistency { .. } => true,
                Constraint::MirrorMultiplier { pairs, .. } => pairs.iter().any(|p| p.contains(&sub.stage)),
            };
            if !applies {
                return true;
            }
            let first = self.constraint_key(c, vocab[sub.layers[0]]);
            sub.layers.iter().all(|&t| self.constraint_key(c, vocab[t]) == first)
        })
    }

    /// Full validity check: stage layout plus every constraint.
    pub fn validate(&self, arch: &Architecture) -> Result<(), ArchError> {
        if arch.stages.len() != self.num_stages() {
            return Err(ArchError::StageMismatch(format!(
                "architecture has {} stages, space has {}",
                arch.stages.len(),
                self.num_stages()
            )));
        }
        for (u, sub) in arch.stages.iter().enumerate() {
            if sub.stage != u {
                return Err(ArchError::StageMismatch(format!("subgraph for stage {} placed at {u}", sub.stage)));
            }
            self.check_subgraph(sub)?;
        }
        for (c, rule) in self.constraints().iter().enumerate() {
            let key_of = |u: usize, i: usize| {
                let t = self.stages()[u].vocab[arch.stages[u].layers[i]];
                self.constraint_key(c, t)
            };
            let groups: Vec<Vec<usize>> = match rule {
                Constraint::ChannelConsistency { .. } => vec![(0..self.num_stages()).collect()],
                Constraint::MirrorMultiplier { pairs, .. } => pairs.iter().map(|p| p.to_vec()).collect(),
            };
            for group in groups {
                let mut expected: Option<&str> = None;
                for &u in &group {
                    for i in 0..arch.stages[u].layers.len() {
                        let key = key_of(u, i);
                        match expected {
                            None => expected = Some(key),
                            Some(e) if e != key => {
                                return Err(ArchError::ConstraintViolation {
                                    rule: rule.name(),
                                    detail: format!("{} differs: {e} vs {key} in stage {u}", rule.attr()),
                                });
                            }
                            Some(_) => {}
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn is_valid(&self, arch: &Architecture) -> bool {
        self.validate(arch).is_ok()
    }

    /// Sequence graph of a validated architecture.
    pub fn assemble(&self, arch: &Architecture) -> Result<ArchGraph, ArchError> {
        self.validate(arch)?;
        Ok(self.graph_unchecked(arch))
    }

    /// Sequence graph without constraint checks (layout must still be in range).
    pub(crate) fn graph_unchecked(&self, arch: &Architecture) -> ArchGraph {
        let mut nodes = Vec::with_capacity(arch.num_layers());
        for sub in &arch.stages {
            nodes.extend(self.subgraph_nodes(sub));
        }
        let edges = (1..nodes.len()).map(|i| (i - 1, i)).collect();
        ArchGraph::from_parts(nodes, edges).expect("sequence graphs are acyclic")
    }

    /// The nodes of one stage subgraph with their true positional features.
    pub fn subgraph_nodes(&self, sub: &ModuleSubgraph) -> Vec<GraphNode> {
        let vocab = &self.stages()[sub.stage].vocab;
        sub.layers
            .iter()
            .enumerate()
            .map(|(pos, &c)| GraphNode { features: self.node_features(sub.stage, pos, vocab[c]) })
            .collect()
    }

    /// A stage subgraph as a standalone sequence graph.
    pub fn subgraph_graph(&self, sub: &ModuleSubgraph) -> Result<ArchGraph, ArchError> {
        self.check_subgraph(sub)?;
        let nodes = self.subgraph_nodes(sub);
        let edges = (1..nodes.len()).map(|i| (i - 1, i)).collect();
        ArchGraph::from_parts(nodes, edges)
    }

    /// Recovers the stage subgraphs of a sequence graph built from this space.
    pub fn decompose(&self, graph: &ArchGraph) -> Result<Architecture, ArchError> {
        let schema = self.schema();
        let stage_cat = schema
            .categories
            .iter()
            .position(|c| c.source == FeatureSource::Stage)
            .ok_or_else(|| ArchError::SchemaMismatch("space has no stage feature".into()))?;
        let mut stages: Vec<ModuleSubgraph> = (0..self.num_stages()).map(|u| ModuleSubgraph::new(u, vec![])).collect();
        for node in graph.nodes() {
            schema.check(&node.features)?;
            let FeatureValue::Choice(u) = node.features[stage_cat] else { unreachable!("checked categorical") };
            let pos = stages[u].layers.len();
            let matches: Vec<usize> = self.stages()[u]
                .vocab
                .iter()
                .enumerate()
                .filter(|&(_, &t)| self.node_features(u, pos, t) == node.features)
                .map(|(i, _)| i)
                .collect();
            match matches.as_slice() {
                [one] => stages[u].layers.push(*one),
                [] => return Err(ArchError::SchemaMismatch(format!("node in stage {u} matches no layer type"))),
                _ => return Err(ArchError::SchemaMismatch(format!("node in stage {u} matches several layer types"))),
            }
        }
        let arch = Architecture::new(stages);
        self.validate(&arch)?;
        Ok(arch)
    }

    /// Layer type names of a subgraph, joined with `+`.
    pub fn describe_subgraph(&self, sub: &ModuleSubgraph) -> String {
        let vocab = &self.stages()[sub.stage].vocab;
        sub.layers
            .iter()
            .map(|&c| self.layer_types()[vocab[c]].name.as_str())
            .collect::<Vec<_>>()
            .join("+")
    }
}
