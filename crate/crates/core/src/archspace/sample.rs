use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::arch::{Architecture, ModuleSubgraph};
use super::space::SearchSpace;
use super::ArchError;

/// Attempts per architecture before the space is declared effectively empty.
pub const MAX_REJECTIONS: usize = 1000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Each stage subgraph uniform over all subgraphs of the stage.
    #[default]
    UniformSubgraph,
    /// Layer count uniform over the stage bounds, then layers uniform.
    UniformDepth,
}

impl SearchSpace {
    /// Draws one stage subgraph.
    pub fn sample_subgraph<R: Rng>(&self, u: usize, mode: SamplingMode, rng: &mut R) -> ModuleSubgraph {
        let stage = &self.stages()[u];
        match mode {
            SamplingMode::UniformSubgraph => {
                let count = self.subgraph_count_u64(u);
                let id = rng.random_range(0..count);
                self.subgraph_from_id(u, id).expect("id below count")
            }
            SamplingMode::UniformDepth => {
                let l = rng.random_range(stage.l_min..=stage.l_max);
                let layers = (0..l).map(|_| rng.random_range(0..stage.vocab_size())).collect();
                ModuleSubgraph::new(u, layers)
            }
        }
    }

    /// A stage subgraph that passes the stage-local constraint checks.
    ///
    /// Rejecting infeasible subgraphs per stage keeps the draw uniform over
    /// valid tuples while avoiding whole-architecture rejection for them.
    fn sample_feasible<R: Rng>(&self, u: usize, mode: SamplingMode, rng: &mut R) -> Result<ModuleSubgraph, ArchError> {
        for _ in 0..MAX_REJECTIONS {
            let sub = self.sample_subgraph(u, mode, rng);
            if self.subgraph_feasible(&sub) {
                return Ok(sub);
            }
        }
        Err(ArchError::SamplingExhausted { attempts: MAX_REJECTIONS })
    }

    /// One valid architecture by rejection sampling.
    pub fn sample_one<R: Rng>(&self, mode: SamplingMode, rng: &mut R) -> Result<Architecture, ArchError> {
        for _ in 0..MAX_REJECTIONS {
            let stages = (0..self.num_stages())
                .map(|u| self.sample_feasible(u, mode, rng))
                .collect::<Result<Vec<_>, _>>()?;
            let arch = Architecture::new(stages);
            if self.is_valid(&arch) {
                return Ok(arch);
            }
        }
        Err(ArchError::SamplingExhausted { attempts: MAX_REJECTIONS })
    }

    /// `n` valid architectures from a seeded stream (duplicates possible).
    pub fn sample_random(&self, n: usize, seed: u64, mode: SamplingMode) -> Result<Vec<Architecture>, ArchError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.sample_one(mode, &mut rng)).collect()
    }

    fn subgraph_count_u64(&self, u: usize) -> u64 {
        use num_traits::ToPrimitive;
        self.count_stage_subgraphs(u)
            .expect("stage in range")
            .to_u64()
            .expect("stage subgraph count fits in 64 bits")
    }
}
