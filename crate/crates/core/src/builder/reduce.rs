use std::collections::BTreeSet;

use num_bigint::BigUint;
use num_traits::One;
use serde::{Deserialize, Serialize};

use super::BuildError;
use crate::archspace::{ModuleSubgraph, SearchSpace};
use crate::scorer::{ScoreRow, ScoreTable};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Top K by score within each stage.
    #[default]
    Unconstrained,
    /// K split across subgraph lengths, remainder to the longer ones, then top within each length.
    HopConstrained,
}

/// Where a reduced space came from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default)]
    pub tables: Vec<String>,
    #[serde(default)]
    pub k: Vec<usize>,
    #[serde(default)]
    pub targets: Vec<String>,
    #[serde(default)]
    pub selection: Vec<Selection>,
}

/// Retained subgraph ids per stage of a parent space, ascending and deduplicated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedSpace {
    pub space: String,
    pub fingerprint: String,
    pub stages: Vec<Vec<u64>>,
    #[serde(default)]
    pub provenance: Provenance,
}

impl ReducedSpace {
    /// The whole space as a reduced space.
    pub fn full(space: &SearchSpace, cap: u64) -> Result<Self, BuildError> {
        let stages = (0..space.num_stages())
            .map(|u| Ok(space.enumerate_stage_subgraphs(u, cap)?.map(|s| space.subgraph_id(&s)).collect::<Result<_, _>>()?))
            .collect::<Result<_, BuildError>>()?;
        Ok(Self {
            space: space.name().into(),
            fingerprint: space.fingerprint().into(),
            stages,
            provenance: Provenance::default(),
        })
    }

    /// Product of per-stage retained counts, before constraints.
    pub fn size(&self) -> BigUint {
        self.stages.iter().fold(BigUint::one(), |acc, s| acc * BigUint::from(s.len()))
    }

    pub fn check(&self, space: &SearchSpace) -> Result<(), BuildError> {
        if self.fingerprint != space.fingerprint() {
            return Err(BuildError::Mismatch(format!(
                "reduced space belongs to {:?}, not {:?}",
                self.space,
                space.name()
            )));
        }
        if self.stages.len() != space.num_stages() {
            return Err(BuildError::Mismatch("stage count differs from the parent space".into()));
        }
        for (u, ids) in self.stages.iter().enumerate() {
            if ids.windows(2).any(|w| w[0] >= w[1]) {
                return Err(BuildError::Mismatch(format!("stage {u} ids are not strictly ascending")));
            }
            for &id in ids {
                space.subgraph_from_id(u, id)?;
            }
        }
        Ok(())
    }

    pub fn contains(&self, sub: &ModuleSubgraph, space: &SearchSpace) -> bool {
        space
            .subgraph_id(sub)
            .is_ok_and(|id| self.stages.get(sub.stage).is_some_and(|ids| ids.binary_search(&id).is_ok()))
    }

    /// Retained subgraphs per stage in id order.
    pub fn subgraphs(&self, space: &SearchSpace) -> Result<Vec<Vec<ModuleSubgraph>>, BuildError> {
        self.check(space)?;
        self.stages
            .iter()
            .enumerate()
            .map(|(u, ids)| ids.iter().map(|&id| Ok(space.subgraph_from_id(u, id)?)).collect())
            .collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("reduced spaces serialize")
    }

    pub fn from_toml(text: &str) -> Result<Self, BuildError> {
        toml::from_str(text).map_err(|e| BuildError::Parse(e.to_string()))
    }
}

/// Score order: higher score first, then lower canonical id.
fn by_score(a: &&ScoreRow, b: &&ScoreRow) -> std::cmp::Ordering {
    b.score.total_cmp(&a.score).then(a.id.cmp(&b.id))
}

/// Per-length quotas for `k` picks over `lengths` classes, remainder to the longest.
pub fn hop_quotas(k: usize, lengths: usize) -> Vec<usize> {
    let (base, rem) = (k / lengths, k % lengths);
    (0..lengths).map(|i| base + usize::from(i >= lengths - rem)).collect()
}

/// Keeps the best `k` stage-feasible subgraphs of each stage.
pub fn reduce_space(
    table: &ScoreTable,
    space: &SearchSpace,
    k: usize,
    selection: Selection,
) -> Result<ReducedSpace, BuildError> {
    if k == 0 {
        return Err(BuildError::InvalidArgument("K must be at least 1".into()));
    }
    if table.fingerprint != space.fingerprint() || table.stages.len() != space.num_stages() {
        return Err(BuildError::Mismatch("score table was built for a different space".into()));
    }
    let mut stages = Vec::with_capacity(space.num_stages());
    for (u, rows) in table.stages.iter().enumerate() {
        let stage = space.stage(u)?;
        let mut feasible: Vec<&ScoreRow> = rows.iter().filter(|r| space.subgraph_feasible(&r.subgraph)).collect();
        feasible.sort_by(by_score);
        let picked: BTreeSet<u64> = match selection {
            Selection::Unconstrained => feasible.iter().take(k).map(|r| r.id).collect(),
            Selection::HopConstrained => {
                let lengths: Vec<usize> = (stage.l_min..=stage.l_max).collect();
                hop_quotas(k, lengths.len())
                    .into_iter()
                    .zip(&lengths)
                    .flat_map(|(q, &l)| feasible.iter().filter(move |r| r.subgraph.len() == l).take(q).map(|r| r.id))
                    .collect()
            }
        };
        stages.push(picked.into_iter().collect());
    }
    Ok(ReducedSpace {
        space: space.name().into(),
        fingerprint: space.fingerprint().into(),
        stages,
        provenance: Provenance { tables: vec![], k: vec![k], targets: vec![], selection: vec![selection] },
    })
}

/// Per-stage union of reduced spaces over one parent.
pub fn union_spaces(spaces: &[ReducedSpace]) -> Result<ReducedSpace, BuildError> {
    let first = spaces.first().ok_or_else(|| BuildError::InvalidArgument("nothing to unite".into()))?;
    let mut stages: Vec<BTreeSet<u64>> = vec![BTreeSet::new(); first.stages.len()];
    let mut provenance = Provenance::default();
    for s in spaces {
        if s.fingerprint != first.fingerprint || s.stages.len() != first.stages.len() {
            return Err(BuildError::Mismatch(format!("cannot unite reductions of {:?} and {:?}", first.space, s.space)));
        }
        for (set, ids) in stages.iter_mut().zip(&s.stages) {
            set.extend(ids);
        }
        provenance.tables.extend(s.provenance.tables.iter().cloned());
        provenance.k.extend(&s.provenance.k);
        provenance.targets.extend(s.provenance.targets.iter().cloned());
        provenance.selection.extend(&s.provenance.selection);
    }
    Ok(ReducedSpace {
        space: first.space.clone(),
        fingerprint: first.fingerprint.clone(),
        stages: stages.into_iter().map(|s| s.into_iter().collect()).collect(),
        provenance,
    })
}
