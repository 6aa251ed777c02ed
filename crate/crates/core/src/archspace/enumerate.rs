use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

use super::arch::{Architecture, ModuleSubgraph};
use super::space::SearchSpace;
use super::ArchError;

/// Default limit on items produced by any enumeration.
pub const DEFAULT_ENUM_CAP: u64 = 10_000_000;

impl SearchSpace {
    /// Σ_l |B_u|^l over the stage's layer bounds.
    pub fn count_stage_subgraphs(&self, u: usize) -> Result<BigUint, ArchError> {
        let stage = self.stage(u)?;
        let b = BigUint::from(stage.vocab_size());
        let mut total = BigUint::zero();
        for l in stage.l_min..=stage.l_max {
            total += b.pow(l as u32);
        }
        Ok(total)
    }

    /// Product of stage counts; an upper bound on valid architectures when constraints exist.
    pub fn count_space_size(&self) -> BigUint {
        (0..self.num_stages())
            .map(|u| self.count_stage_subgraphs(u).expect("stage in range"))
            .fold(BigUint::one(), |acc, c| acc * c)
    }

    fn stage_count_u64(&self, u: usize) -> Result<u64, ArchError> {
        let c = self.count_stage_subgraphs(u)?;
        c.to_u64().ok_or_else(|| ArchError::CapExceeded { count: c.to_string(), cap: u64::MAX })
    }

    /// Position of a subgraph in (length, lexicographic choices) order.
    pub fn subgraph_id(&self, sub: &ModuleSubgraph) -> Result<u64, ArchError> {
        self.check_subgraph(sub)?;
        let stage = &self.stages()[sub.stage];
        let b = stage.vocab_size() as u64;
        let overflow = || ArchError::CapExceeded { count: "> 2^64".into(), cap: u64::MAX };
        let mut offset = 0u64;
        for l in stage.l_min..sub.layers.len() {
            offset = offset.checked_add(b.checked_pow(l as u32).ok_or_else(overflow)?).ok_or_else(overflow)?;
        }
        let mut lex = 0u64;
        for &c in &sub.layers {
            lex = lex.checked_mul(b).and_then(|x| x.checked_add(c as u64)).ok_or_else(overflow)?;
        }
        offset.checked_add(lex).ok_or_else(overflow)
    }

    /// Inverse of [`SearchSpace::subgraph_id`].
    pub fn subgraph_from_id(&self, u: usize, id: u64) -> Result<ModuleSubgraph, ArchError> {
        let stage = self.stage(u)?;
        let b = stage.vocab_size() as u64;
        let mut rest = id;
        for l in stage.l_min..=stage.l_max {
            let block = b.checked_pow(l as u32).unwrap_or(u64::MAX);
            if rest < block {
                let mut layers = vec![0usize; l];
                for slot in layers.iter_mut().rev() {
                    *slot = (rest % b) as usize;
                    rest /= b;
                }
                return Ok(ModuleSubgraph::new(u, layers));
            }
            rest -= block;
        }
        Err(ArchError::StageMismatch(format!("stage {u} has no subgraph with id {id}")))
    }

    /// Every subgraph of stage `u` in canonical id order.
    pub fn enumerate_stage_subgraphs(&self, u: usize, cap: u64) -> Result<StageSubgraphs, ArchError> {
        let count = self.stage_count_u64(u)?;
        if count > cap {
            return Err(ArchError::CapExceeded { count: count.to_string(), cap });
        }
        let stage = self.stage(u)?;
        Ok(StageSubgraphs {
            stage: u,
            vocab: stage.vocab_size(),
            l_max: stage.l_max,
            current: Some(vec![0; stage.l_min]),
        })
    }

    /// Every valid architecture, in lexicographic order of per-stage subgraph ids.
    ///
    /// The cap applies to the product of stage-feasible subgraph counts.
    pub fn enumerate_architectures(&self, cap: u64) -> Result<Vec<Architecture>, ArchError> {
        let per_stage: Vec<Vec<ModuleSubgraph>> = (0..self.num_stages())
            .map(|u| {
                self.enumerate_stage_subgraphs(u, cap)
                    .map(|it| it.filter(|s| self.subgraph_feasible(s)).collect())
            })
            .collect::<Result<_, _>>()?;
        let size = per_stage.iter().fold(BigUint::one(), |acc, l| acc * BigUint::from(l.len()));
        if size > BigUint::from(cap) {
            return Err(ArchError::CapExceeded { count: size.to_string(), cap });
        }
        Ok(product(&per_stage).into_iter().filter(|a| self.is_valid(a)).collect())
    }
}

/// Cartesian product of per-stage lists in lexicographic order.
pub fn product(per_stage: &[Vec<ModuleSubgraph>]) -> Vec<Architecture> {
    if per_stage.iter().any(Vec::is_empty) {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut idx = vec![0usize; per_stage.len()];
    loop {
        out.push(Architecture::new(idx.iter().zip(per_stage).map(|(&i, l)| l[i].clone()).collect()));
        let mut k = per_stage.len();
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < per_stage[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Odometer over (length, choices) for one stage.
#[derive(Clone, Debug)]
pub struct StageSubgraphs {
    stage: usize,
    vocab: usize,
    l_max: usize,
    current: Option<Vec<usize>>,
}

impl Iterator for StageSubgraphs {
    type Item = ModuleSubgraph;

    fn next(&mut self) -> Option<ModuleSubgraph> {
        let cur = self.current.take()?;
        let item = ModuleSubgraph::new(self.stage, cur.clone());
        let mut next = cur;
        let mut k = next.len();
        let mut carried = true;
        while k > 0 {
            k -= 1;
            next[k] += 1;
            if next[k] < self.vocab {
                carried = false;
                break;
            }
            next[k] = 0;
        }
        if carried {
            if next.len() < self.l_max {
                self.current = Some(vec![0; next.len() + 1]);
            }
        } else {
            self.current = Some(next);
        }
        Some(item)
    }
}
