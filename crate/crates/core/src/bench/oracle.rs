use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::archspace::{presets, Architecture, FeatureSource, ModuleSubgraph, SearchSpace, SpaceFile};
use crate::hash::Hasher;

/// Largest stage enumerated when tabulating contributions.
pub const ORACLE_STAGE_CAP: u64 = 1_000_000;

/// Secondary cost metric, positive per layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostDef {
    pub offset: f64,
    pub per_layer: f64,
    /// Log-scale spread of per-type cost multipliers.
    pub type_spread: f64,
    /// Log-scale spread of per-stage cost multipliers.
    pub stage_spread: f64,
    /// Correlation between a type's cost and its shared quality effect.
    pub quality_correlation: f64,
}

impl Default for CostDef {
    fn default() -> Self {
        Self { offset: 5.0, per_layer: 1.0, type_spread: 0.4, stage_spread: 0.3, quality_correlation: 0.6 }
    }
}

/// Seeded description of a synthetic ground-truth benchmark.
///
/// Term sizes other than `scale`, `noise` and `interaction` are relative; each
/// stage's contributions are standardized to std `scale / sqrt(stages)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleDef {
    pub name: String,
    pub seed: u64,
    pub metric: String,
    pub cost_metric: String,
    pub offset: f64,
    pub scale: f64,
    /// Noise std as a fraction of `scale`.
    pub noise: f64,
    /// Std of the pairwise stage-interaction term as a fraction of `scale`.
    pub interaction: f64,
    /// Stage-specific part of the per-attribute effects.
    pub stage_specific: f64,
    pub position: f64,
    /// Random effect per (stage, layer count).
    pub depth: f64,
    /// Linear effect per layer.
    pub depth_trend: f64,
    /// Unstructured effect per subgraph.
    pub residual: f64,
    /// Multiplier of each attribute category's effect; absent categories use 1.
    #[serde(default)]
    pub category_scales: BTreeMap<String, f64>,
    #[serde(default)]
    pub cost: CostDef,
    pub space: SpaceFile,
}

/// Names accepted by [`OracleDef::preset`].
pub const ORACLE_PRESETS: &[&str] = &["mbv3-like", "pn-like", "toy", "unet-like"];

impl OracleDef {
    fn base(name: &str, space: SpaceFile, seed: u64) -> Self {
        Self {
            name: name.into(),
            seed,
            metric: "acc".into(),
            cost_metric: "lat".into(),
            offset: 75.0,
            scale: 1.0,
            noise: 0.05,
            interaction: 0.1,
            stage_specific: 0.3,
            position: 0.3,
            depth: 0.5,
            depth_trend: 0.5,
            residual: 0.3,
            category_scales: BTreeMap::new(),
            cost: CostDef::default(),
            space,
        }
    }

    pub fn preset(name: &str, seed: u64) -> Result<Self, BenchError> {
        let space = match name {
            "mbv3-like" => presets::mbv3(),
            "pn-like" => presets::proxylessnas(false),
            "toy" => presets::toy(),
            "unet-like" => presets::unet_like(),
            _ => return Err(BenchError::InvalidOracle(format!("unknown oracle preset {name:?}"))),
        };
        Ok(Self::base(name, space, seed))
    }

    /// MBConv oracle where `category` carries `factor`² times the attribute-effect variance of the others.
    pub fn planted(category: &str, factor: f64, seed: u64) -> Self {
        let mut def = Self::base("planted", presets::mbv3(), seed);
        def.category_scales.insert(category.into(), factor);
        def.stage_specific = 0.1;
        def.position = 0.0;
        def.depth = 0.0;
        def.depth_trend = 0.0;
        def.residual = 0.1;
        def
    }

    pub fn from_toml(text: &str) -> Result<Self, BenchError> {
        toml::from_str(text).map_err(|e| BenchError::InvalidOracle(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("oracle definitions serialize")
    }

    fn validate(&self) -> Result<(), BenchError> {
        let terms = [
            ("scale", self.scale),
            ("noise", self.noise),
            ("interaction", self.interaction),
            ("stage_specific", self.stage_specific),
            ("position", self.position),
            ("depth", self.depth),
            ("residual", self.residual),
            ("cost.per_layer", self.cost.per_layer),
            ("cost.type_spread", self.cost.type_spread),
            ("cost.stage_spread", self.cost.stage_spread),
        ];
        if let Some((name, v)) = terms.iter().find(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
            return Err(BenchError::InvalidOracle(format!("{name} must be finite and non-negative, got {v}")));
        }
        if !(self.scale > 0.0 && self.cost.per_layer > 0.0) {
            return Err(BenchError::InvalidOracle("scale and cost.per_layer must be positive".into()));
        }
        if !(self.offset.is_finite() && self.depth_trend.is_finite() && self.cost.offset.is_finite()) {
            return Err(BenchError::InvalidOracle("offsets and trends must be finite".into()));
        }
        if !(-1.0..=1.0).contains(&self.cost.quality_correlation) {
            return Err(BenchError::InvalidOracle("cost.quality_correlation must lie in [-1, 1]".into()));
        }
        if self.metric == self.cost_metric {
            return Err(BenchError::InvalidOracle("metric and cost_metric must differ".into()));
        }
        if let Some((k, v)) = self.category_scales.iter().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(BenchError::InvalidOracle(format!("category scale {k} = {v} is invalid")));
        }
        Ok(())
    }
}

/// Ground-truth evaluator with tabulated per-stage contributions.
#[derive(Clone, Debug)]
pub struct SyntheticOracle {
    def: OracleDef,
    space: SearchSpace,
    /// `[stage][subgraph id]` contribution.
    contributions: Vec<Vec<f64>>,
    /// `[stage][subgraph id]` cost.
    costs: Vec<Vec<f64>>,
    /// Upper-triangular interaction coefficients `[u][v]`, `u < v`.
    gamma: Vec<Vec<f64>>,
    stage_std: f64,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

impl SyntheticOracle {
    pub fn new(def: OracleDef) -> Result<Self, BenchError> {
        def.validate()?;
        let space = SearchSpace::new(def.space.clone())?;
        let mut rng = ChaCha8Rng::seed_from_u64(def.seed);
        let stages = space.num_stages();
        let types = space.layer_types();

        // Attribute categories and, per layer type, the value each one takes.
        let attr_cats: Vec<&str> = space
            .file()
            .features
            .iter()
            .filter(|f| f.source == FeatureSource::Attr)
            .map(|f| f.name.as_str())
            .collect();
        let type_values: Vec<Vec<String>> = types
            .iter()
            .map(|t| attr_cats.iter().map(|c| t.attrs.get(*c).map(|v| v.to_string()).unwrap_or_default()).collect())
            .collect();
        let mut value_ids: Vec<BTreeMap<&str, usize>> = vec![BTreeMap::new(); attr_cats.len()];
        for tv in &type_values {
            for (k, v) in tv.iter().enumerate() {
                let n = value_ids[k].len();
                value_ids[k].entry(v.as_str()).or_insert(n);
            }
        }
        let mut sorted_ids = value_ids.clone();
        for ids in &mut sorted_ids {
            for (i, (_, id)) in ids.iter_mut().enumerate() {
                *id = i;
            }
        }
        let type_value_idx: Vec<Vec<usize>> = type_values
            .iter()
            .map(|tv| tv.iter().enumerate().map(|(k, v)| sorted_ids[k][v.as_str()]).collect())
            .collect();
        let cat_scale: Vec<f64> =
            attr_cats.iter().map(|c| def.category_scales.get(*c).copied().unwrap_or(1.0)).collect();

        let shared: Vec<Vec<f64>> = sorted_ids.iter().map(|ids| (0..ids.len()).map(|_| normal(&mut rng)).collect()).collect();
        let specific: Vec<Vec<Vec<f64>>> = (0..stages)
            .map(|_| sorted_ids.iter().map(|ids| (0..ids.len()).map(|_| normal(&mut rng)).collect()).collect())
            .collect();
        let max_len = space.stages().iter().map(|s| s.l_max).max().unwrap_or(0);
        let position: Vec<Vec<f64>> = (0..stages).map(|_| (0..max_len).map(|_| normal(&mut rng)).collect()).collect();
        let depth: Vec<Vec<f64>> = (0..stages).map(|_| (0..=max_len).map(|_| normal(&mut rng)).collect()).collect();

        // Shared quality of each layer type drives the correlated part of its cost.
        let quality: Vec<f64> = type_value_idx
            .iter()
            .map(|idx| idx.iter().enumerate().map(|(k, &v)| cat_scale[k] * shared[k][v]).sum())
            .collect();
        let q_mean = quality.iter().sum::<f64>() / quality.len() as f64;
        let q_std = (quality.iter().map(|q| (q - q_mean).powi(2)).sum::<f64>() / quality.len() as f64).sqrt();
        let rho = def.cost.quality_correlation;
        let type_cost: Vec<f64> = quality
            .iter()
            .map(|q| {
                let z = if q_std > 0.0 { (q - q_mean) / q_std } else { 0.0 };
                let mix = rho * z + (1.0 - rho * rho).sqrt() * normal(&mut rng);
                def.cost.per_layer * (def.cost.type_spread * mix).exp()
            })
            .collect();
        let stage_cost: Vec<f64> = (0..stages).map(|_| (def.cost.stage_spread * normal(&mut rng)).exp()).collect();

        let pairs = stages * stages.saturating_sub(1) / 2;
        let g_scale = if pairs > 0 { def.interaction * def.scale / (pairs as f64).sqrt() } else { 0.0 };
        let gamma: Vec<Vec<f64>> =
            (0..stages).map(|u| (0..stages).map(|v| if v > u { g_scale * normal(&mut rng) } else { 0.0 }).collect()).collect();

        let stage_std = def.scale / (stages.max(1) as f64).sqrt();
        let mut contributions = Vec::with_capacity(stages);
        let mut costs = Vec::with_capacity(stages);
        for u in 0..stages {
            let vocab = &space.stages()[u].vocab;
            let mut raw = Vec::new();
            let mut cost = Vec::new();
            for sub in space.enumerate_stage_subgraphs(u, ORACLE_STAGE_CAP)? {
                let mut v = def.depth * depth[u][sub.len()] + def.depth_trend * sub.len() as f64;
                let mut c = 0.0;
                for (i, &choice) in sub.layers.iter().enumerate() {
                    let t = vocab[choice];
                    for (k, &val) in type_value_idx[t].iter().enumerate() {
                        v += cat_scale[k] * (shared[k][val] + def.stage_specific * specific[u][k][val]);
                    }
                    v += def.position * position[u][i];
                    c += type_cost[t] * stage_cost[u];
                }
                v += def.residual * normal(&mut rng);
                raw.push(v);
                cost.push(c);
            }
            let n = raw.len() as f64;
            let mean = raw.iter().sum::<f64>() / n;
            let std = (raw.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
            let scaled = raw.iter().map(|x| if std > 0.0 { (x - mean) / std * stage_std } else { 0.0 }).collect();
            contributions.push(scaled);
            costs.push(cost);
        }
        Ok(Self { def, space, contributions, costs, gamma, stage_std })
    }

    pub fn preset(name: &str, seed: u64) -> Result<Self, BenchError> {
        Self::new(OracleDef::preset(name, seed)?)
    }

    pub fn def(&self) -> &OracleDef {
        &self.def
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    /// True additive contribution of one stage subgraph.
    pub fn stage_contribution(&self, sub: &ModuleSubgraph) -> Result<f64, BenchError> {
        let id = self.space.subgraph_id(sub)?;
        Ok(self.contributions[sub.stage][id as usize])
    }

    pub fn stage_cost(&self, sub: &ModuleSubgraph) -> Result<f64, BenchError> {
        let id = self.space.subgraph_id(sub)?;
        Ok(self.costs[sub.stage][id as usize])
    }

    fn ids(&self, arch: &Architecture) -> Result<Vec<usize>, BenchError> {
        self.space.validate(arch)?;
        arch.stages.iter().map(|s| Ok(self.space.subgraph_id(s)? as usize)).collect()
    }

    /// Noise-free primary metric.
    pub fn true_value(&self, arch: &Architecture) -> Result<f64, BenchError> {
        let ids = self.ids(arch)?;
        Ok(self.value_from_ids(&ids))
    }

    fn value_from_ids(&self, ids: &[usize]) -> f64 {
        let c: Vec<f64> = ids.iter().enumerate().map(|(u, &i)| self.contributions[u][i]).collect();
        let mut y = self.def.offset + c.iter().sum::<f64>();
        for u in 0..c.len() {
            for v in u + 1..c.len() {
                y += self.gamma[u][v] * (c[u] / self.stage_std) * (c[v] / self.stage_std);
            }
        }
        y
    }

    pub fn cost(&self, arch: &Architecture) -> Result<f64, BenchError> {
        let ids = self.ids(arch)?;
        Ok(self.def.cost.offset + ids.iter().enumerate().map(|(u, &i)| self.costs[u][i]).sum::<f64>())
    }

    /// Primary metric with noise seeded by the oracle seed and the architecture.
    pub fn noisy_value(&self, arch: &Architecture) -> Result<f64, BenchError> {
        let ids = self.ids(arch)?;
        let mut h = Hasher::new();
        h.u64(self.def.seed);
        for &i in &ids {
            h.u64(i as u64);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(h.finish_u64());
        Ok(self.value_from_ids(&ids) + self.def.noise * self.def.scale * normal(&mut rng))
    }

    /// Both raw metrics keyed by their names.
    pub fn evaluate(&self, arch: &Architecture) -> Result<BTreeMap<String, f64>, BenchError> {
        Ok(BTreeMap::from([
            (self.def.metric.clone(), self.noisy_value(arch)?),
            (self.def.cost_metric.clone(), self.cost(arch)?),
        ]))
    }
}
