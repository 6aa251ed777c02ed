use std::collections::HashMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::pareto::{pareto_merge, Direction, FrontMember, ParetoFront};
use super::EvoError;
use crate::archspace::{Architecture, EncodedArch, ModuleSubgraph, SamplingMode, SearchSpace, MAX_REJECTIONS};
use crate::builder::ReducedSpace;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mutation {
    /// Replace one stage's subgraph.
    #[default]
    StageSwap,
    /// Add, remove or edit a single layer.
    LayerEdit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub initial_archs: usize,
    pub iters: usize,
    pub evals_per_iter: usize,
    pub mutation: Mutation,
    pub directions: Vec<Direction>,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            initial_archs: 50,
            iters: 4,
            evals_per_iter: 50,
            mutation: Mutation::StageSwap,
            directions: vec![Direction::Maximize, Direction::Minimize],
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn budget(&self) -> usize {
        self.initial_archs + self.iters * self.evals_per_iter
    }

    pub fn validate(&self) -> Result<(), EvoError> {
        if self.initial_archs == 0 || self.iters == 0 || self.evals_per_iter == 0 {
            return Err(EvoError::InvalidConfig("initial_archs, iters and evals_per_iter must be at least 1".into()));
        }
        if self.directions.is_empty() {
            return Err(EvoError::InvalidConfig("at least one objective direction is required".into()));
        }
        Ok(())
    }
}

/// A space, optionally restricted to the subgraphs retained by a reduction.
pub struct SearchDomain<'a> {
    space: &'a SearchSpace,
    reduced: Option<&'a ReducedSpace>,
    lists: Option<Vec<Vec<ModuleSubgraph>>>,
}

impl<'a> SearchDomain<'a> {
    pub fn full(space: &'a SearchSpace) -> Self {
        Self { space, reduced: None, lists: None }
    }

    pub fn reduced(space: &'a SearchSpace, reduced: &'a ReducedSpace) -> Result<Self, EvoError> {
        let lists = reduced.subgraphs(space)?;
        if lists.iter().any(Vec::is_empty) {
            return Err(EvoError::NoMutation("a stage of the reduced space retains nothing".into()));
        }
        Ok(Self { space, reduced: Some(reduced), lists: Some(lists) })
    }

    pub fn space(&self) -> &SearchSpace {
        self.space
    }
    fn allows(&self, sub: &ModuleSubgraph) -> bool {
        self.reduced.is_none_or(|r| r.contains(sub, self.space))
    }

    fn draw_subgraph<R: Rng>(&self, u: usize, rng: &mut R) -> ModuleSubgraph {
        match &self.lists {
            Some(lists) => lists[u].choose(rng).expect("nonempty stage list").clone(),
            None => self.space.sample_subgraph(u, SamplingMode::UniformSubgraph, rng),
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<Architecture, EvoError> {
        if self.lists.is_none() {
            return Ok(self.space.sample_one(SamplingMode::UniformSubgraph, rng)?);
        }
        for _ in 0..MAX_REJECTIONS {
            let arch = Architecture::new((0..self.space.num_stages()).map(|u| self.draw_subgraph(u, rng)).collect());
            if self.space.is_valid(&arch) {
                return Ok(arch);
            }
        }
        Err(EvoError::NoMutation(format!("no valid architecture after {MAX_REJECTIONS} draws")))
    }

    /// One mutation of `arch`; the result is valid, allowed by the domain and different from `arch`.
    pub fn mutate<R: Rng>(&self, arch: &Architecture, mode: Mutation, rng: &mut R) -> Result<Architecture, EvoError> {
        let stages = self.space.num_stages();
        for _ in 0..MAX_REJECTIONS {
            let u = rng.random_range(0..stages);
            let current = &arch.stages[u];
            let next = match mode {
                Mutation::StageSwap => self.draw_subgraph(u, rng),
                Mutation::LayerEdit => match layer_edit(self.space, current, rng) {
                    Some(s) => s,
                    None => continue,
                },
            };
            if &next == current || !self.allows(&next) {
                continue;
            }
            let mut out = arch.clone();
            out.stages[u] = next;
            if self.space.is_valid(&out) {
                return Ok(out);
            }
        }
        Err(EvoError::NoMutation(format!("no valid {mode:?} mutation after {MAX_REJECTIONS} attempts")))
    }
}

/// A random admissible add, remove or edit of one layer.
fn layer_edit<R: Rng>(space: &SearchSpace, sub: &ModuleSubgraph, rng: &mut R) -> Option<ModuleSubgraph> {
    let stage = &space.stages()[sub.stage];
    let vocab = stage.vocab_size();
    let mut moves = Vec::with_capacity(3);
    if sub.len() < stage.l_max {
        moves.push(0);
    }
    if sub.len() > stage.l_min {
        moves.push(1);
    }
    if vocab > 1 && !sub.is_empty() {
        moves.push(2);
    }
    let mut layers = sub.layers.clone();
    match *moves.choose(rng)? {
        0 => {
            let pos = rng.random_range(0..=layers.len());
            layers.insert(pos, rng.random_range(0..vocab));
        }
        1 => {
            layers.remove(rng.random_range(0..layers.len()));
        }
        _ => {
            let pos = rng.random_range(0..layers.len());
            let shift = rng.random_range(1..vocab);
            layers[pos] = (layers[pos] + shift) % vocab;
        }
    }
    Some(ModuleSubgraph::new(sub.stage, layers))
}

/// One evaluation in the search log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    /// 0 for the initial pool.
    pub iteration: usize,
    pub index: usize,
    pub arch: EncodedArch,
    pub id: u64,
    pub objectives: Vec<f64>,
    /// Whether the architecture was on the front after its iteration's merge.
    pub on_front: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub front: ParetoFront,
    pub log: Vec<LogEntry>,
    /// Front objective vectors after the initial pool and after each iteration.
    pub history: Vec<Vec<Vec<f64>>>,
    /// Draws rejected because the architecture was already evaluated.
    pub cache_hits: usize,
}

/// Attempts allowed per requested evaluation before a phase gives up on finding new architectures.
const ATTEMPTS_PER_EVAL: usize = 200;

/// Random initial pool, then iterations of mutating parents drawn uniformly from the front.
///
/// Each phase stops early if it cannot find enough unevaluated
/// architectures, which happens when the budget exceeds the domain.
pub fn run_ea<E, F>(dom: &SearchDomain<'_>, evaluator: F, config: &SearchConfig) -> Result<SearchResult, EvoError>
where
    E: std::fmt::Display,
    F: FnMut(&Architecture) -> Result<Vec<f64>, E>,
{
    config.validate()?;
    let mut evaluator = evaluator;
    let space = dom.space;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut seen: HashMap<Architecture, u64> = HashMap::new();
    let mut front = ParetoFront::new(config.directions.clone());
    let mut log: Vec<LogEntry> = Vec::new();
    let mut history = Vec::new();
    let mut cache_hits = 0;

    for iteration in 0..=config.iters {
        let wanted = if iteration == 0 { config.initial_archs } else { config.evals_per_iter };
        let mut batch: Vec<FrontMember> = Vec::with_capacity(wanted);
        let mut attempts = 0;
        while batch.len() < wanted && attempts < wanted * ATTEMPTS_PER_EVAL {
            attempts += 1;
            let arch = if iteration == 0 || front.is_empty() {
                dom.sample(&mut rng)?
            } else {
                let parent = &front.members[rng.random_range(0..front.len())];
                match dom.mutate(&parent.arch, config.mutation, &mut rng) {
                    Ok(a) => a,
                    Err(EvoError::NoMutation(_)) => continue,
                    Err(e) => return Err(e),
                }
            };
            if seen.contains_key(&arch) {
                cache_hits += 1;
                continue;
            }
            let id = space.assemble(&arch)?.id();
            let objectives = evaluator(&arch).map_err(|e| EvoError::Evaluator { id, msg: e.to_string() })?;
            if objectives.len() != config.directions.len() {
                return Err(EvoError::Arity { expected: config.directions.len(), got: objectives.len() });
            }
            if let Some(bad) = objectives.iter().find(|v| !v.is_finite()) {
                return Err(EvoError::Evaluator { id, msg: format!("non-finite objective {bad}") });
            }
            seen.insert(arch.clone(), id);
            batch.push(FrontMember { arch, id, objectives });
        }
        if batch.len() < wanted {
            log::warn!("iteration {iteration}: found {} of {wanted} unevaluated architectures", batch.len());
        }
        front = pareto_merge(&front, &batch)?;
        for m in batch {
            let on_front = front.contains(m.id);
            log.push(LogEntry {
                iteration,
                index: log.len(),
                arch: space.encode(&m.arch),
                id: m.id,
                objectives: m.objectives,
                on_front,
            });
        }
        history.push(front.objectives());
    }
    Ok(SearchResult { front, log, history, cache_hits })
}
