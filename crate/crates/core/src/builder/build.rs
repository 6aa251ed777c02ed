use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use num_traits::ToPrimitive;

use super::{BuildError, ReducedSpace};
use crate::archspace::{Architecture, ModuleSubgraph, SearchSpace};
use crate::scorer::ScoreTable;

/// Default limit on reduced-space products.
pub const DEFAULT_REDUCED_CAP: u64 = 1_000_000;

/// Valid architectures of a reduced space in lexicographic order of retained ids.
pub struct ReducedArchs<'a> {
    space: &'a SearchSpace,
    lists: Vec<Vec<ModuleSubgraph>>,
    idx: Option<Vec<usize>>,
}

impl Iterator for ReducedArchs<'_> {
    type Item = Architecture;

    fn next(&mut self) -> Option<Architecture> {
        loop {
            let idx = self.idx.as_mut()?;
            let arch = Architecture::new(idx.iter().zip(&self.lists).map(|(&i, l)| l[i].clone()).collect());
            let mut k = idx.len();
            loop {
                if k == 0 {
                    self.idx = None;
                    break;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < self.lists[k].len() {
                    break;
                }
                idx[k] = 0;
            }
            if self.space.is_valid(&arch) {
                return Some(arch);
            }
        }
    }
}

pub fn enumerate_reduced<'a>(
    reduced: &ReducedSpace,
    space: &'a SearchSpace,
    cap: u64,
) -> Result<ReducedArchs<'a>, BuildError> {
    let size = reduced.size();
    if size.to_u64().is_none_or(|s| s > cap) {
        return Err(BuildError::Arch(crate::archspace::ArchError::CapExceeded { count: size.to_string(), cap }));
    }
    let lists = reduced.subgraphs(space)?;
    let idx = (!lists.iter().any(Vec::is_empty)).then(|| vec![0; lists.len()]);
    Ok(ReducedArchs { space, lists, idx })
}

/// An architecture with its summed subgraph score.
#[derive(Clone, Debug, PartialEq)]
pub struct Built {
    pub arch: Architecture,
    pub score: f64,
    /// Canonical subgraph id per stage.
    pub ids: Vec<u64>,
}

/// Sum of stage scores in stage order; shared by the search and by brute-force checks.
pub fn total_score(scores: &[f64]) -> f64 {
    scores.iter().fold(0.0, |acc, &s| acc + s)
}

struct Entry {
    score: f64,
    ids: Vec<u64>,
    idx: Vec<usize>,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score.total_cmp(&other.score).then_with(|| other.ids.cmp(&self.ids))
    }
}

/// Exact top-`n` valid combinations by total score, ties broken by ascending id tuple.
///
/// Best-first over per-stage lists sorted by score; every combination with
/// the current best score is expanded before any is emitted, so ties are
/// ordered exactly.
pub fn build_top(
    table: &ScoreTable,
    space: &SearchSpace,
    n: usize,
    restrict: Option<&ReducedSpace>,
) -> Result<Vec<Built>, BuildError> {
    if n == 0 {
        return Err(BuildError::InvalidArgument("n must be at least 1".into()));
    }
    if table.fingerprint != space.fingerprint() || table.stages.len() != space.num_stages() {
        return Err(BuildError::Mismatch("score table was built for a different space".into()));
    }
    if let Some(r) = restrict {
        r.check(space)?;
    }
    let lists: Vec<Vec<(f64, u64, &ModuleSubgraph)>> = table
        .stages
        .iter()
        .enumerate()
        .map(|(u, rows)| {
            let mut l: Vec<_> = rows
                .iter()
                .filter(|r| space.subgraph_feasible(&r.subgraph))
                .filter(|r| restrict.is_none_or(|rs| rs.stages[u].binary_search(&r.id).is_ok()))
                .map(|r| (r.score, r.id, &r.subgraph))
                .collect();
            l.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            l
        })
        .collect();
    if lists.iter().any(Vec::is_empty) {
        return Err(BuildError::NotEnough { requested: n, found: 0 });
    }

    let entry = |idx: Vec<usize>| {
        let scores: Vec<f64> = idx.iter().zip(&lists).map(|(&i, l)| l[i].0).collect();
        let ids = idx.iter().zip(&lists).map(|(&i, l)| l[i].1).collect();
        Entry { score: total_score(&scores), ids, idx }
    };
    let mut heap = BinaryHeap::new();
    let mut seen = HashSet::new();
    let start = vec![0; lists.len()];
    seen.insert(start.clone());
    heap.push(entry(start));
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let Some(top) = heap.pop() else { break };
        let mut group = vec![top];
        while heap.peek().is_some_and(|e| e.score == group[0].score) {
            group.push(heap.pop().expect("peeked"));
        }
        // Children of this group may tie with it; drain them into the group too.
        let mut i = 0;
        while i < group.len() {
            for u in 0..lists.len() {
                let mut next = group[i].idx.clone();
                next[u] += 1;
                if next[u] < lists[u].len() && seen.insert(next.clone()) {
                    let child = entry(next);
                    if child.score == group[0].score {
                        group.push(child);
                    } else {
                        heap.push(child);
                    }
                }
            }
            i += 1;
        }
        group.sort_by(|a, b| b.cmp(a));
        for e in group {
            if out.len() == n {
                break;
            }
            let arch = Architecture::new(e.idx.iter().zip(&lists).map(|(&i, l)| l[i].2.clone()).collect());
            if space.is_valid(&arch) {
                out.push(Built { arch, score: e.score, ids: e.ids });
            }
        }
    }
    if out.len() < n {
        return Err(BuildError::NotEnough { requested: n, found: out.len() });
    }
    Ok(out)
}
