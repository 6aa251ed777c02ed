use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ArchError, FeatureValue};
use crate::hash::digest_hex;

/// Where a feature category takes its value from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSource {
    /// Index of the node's stage.
    Stage,
    /// Position of the node inside its stage (0-based).
    Layer,
    /// Named attribute of the node's layer type.
    Attr,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FeatureKind {
    Categorical { choices: Vec<String> },
    Numeric { min: f64, max: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureCategory {
    pub name: String,
    pub source: FeatureSource,
    #[serde(flatten)]
    pub kind: FeatureKind,
}

impl FeatureCategory {
    pub fn choices(&self) -> Option<&[String]> {
        match &self.kind {
            FeatureKind::Categorical { choices } => Some(choices),
            FeatureKind::Numeric { .. } => None,
        }
    }
}

/// Ordered feature categories every node supplies a value for.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub categories: Vec<FeatureCategory>,
}

impl FeatureSchema {
    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    /// Stable digest of names, sources and kinds.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("schema serializes");
        digest_hex(json.as_bytes())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.categories.iter().position(|c| c.name == name)
    }

    /// Checks one node's feature vector against the schema.
    pub fn check(&self, features: &[FeatureValue]) -> Result<(), ArchError> {
        if features.len() != self.categories.len() {
            return Err(ArchError::SchemaMismatch(format!(
                "expected {} features, got {}",
                self.categories.len(),
                features.len()
            )));
        }
        for (cat, value) in self.categories.iter().zip(features) {
            match (&cat.kind, value) {
                (FeatureKind::Categorical { choices }, FeatureValue::Choice(i)) if *i < choices.len() => {}
                (FeatureKind::Numeric { .. }, FeatureValue::Numeric(x)) if x.is_finite() => {}
                _ => {
                    return Err(ArchError::SchemaMismatch(format!(
                        "feature {} has incompatible value {value:?}",
                        cat.name
                    )))
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Number(f64),
    Text(String),
}

impl std::fmt::Display for AttrValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AttrValue::Number(x) => write!(f, "{x}"),
            AttrValue::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerType {
    pub name: String,
    #[serde(default)]
    pub attrs: BTreeMap<String, AttrValue>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageDef {
    pub name: String,
    pub l_min: usize,
    pub l_max: usize,
    /// Layer type names allowed in this stage.
    pub vocab: Vec<String>,
}

/// Named validity rules.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Constraint {
    /// Every node carries the same value of `attr`.
    ChannelConsistency { attr: String },
    /// Within each listed pair of stages, every node carries the same value of `attr`.
    MirrorMultiplier { attr: String, pairs: Vec<[usize; 2]> },
}

impl Constraint {
    pub fn name(&self) -> &'static str {
        match self {
            Constraint::ChannelConsistency { .. } => "channel_consistency",
            Constraint::MirrorMultiplier { .. } => "mirror_multiplier",
        }
    }

    pub fn attr(&self) -> &str {
        match self {
            Constraint::ChannelConsistency { attr } | Constraint::MirrorMultiplier { attr, .. } => attr,
        }
    }
}

/// A feature category as written in a space file.
///
/// Attribute categories give either `choices` (categorical) or `min`/`max`
/// (numeric); stage and layer categories derive their choices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureDef {
    pub name: String,
    pub source: FeatureSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
}

impl FeatureDef {
    pub fn positional(name: &str, source: FeatureSource) -> Self {
        Self { name: name.into(), source, choices: None, min: None, max: None }
    }

    pub fn categorical(name: &str, choices: &[&str]) -> Self {
        Self {
            name: name.into(),
            source: FeatureSource::Attr,
            choices: Some(choices.iter().map(|c| c.to_string()).collect()),
            min: None,
            max: None,
        }
    }

    pub fn numeric(name: &str, min: f64, max: f64) -> Self {
        Self { name: name.into(), source: FeatureSource::Attr, choices: None, min: Some(min), max: Some(max) }
    }
}

/// On-disk search space definition (TOML).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceFile {
    pub name: String,
    pub features: Vec<FeatureDef>,
    pub layer_types: Vec<LayerType>,
    pub stages: Vec<StageDef>,
    #[serde(default)]
    pub constraints: Vec<Constraint>,
}

impl SpaceFile {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("space file serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, ArchError> {
        toml::from_str(text).map_err(|e| ArchError::InvalidSpec(e.to_string()))
    }
}

/// A stage after name resolution: vocabulary entries are layer type indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Stage {
    pub name: String,
    pub l_min: usize,
    pub l_max: usize,
    pub vocab: Vec<usize>,
}

impl Stage {
    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }
}

/// A validated macro search space.
#[derive(Clone, Debug)]
pub struct SearchSpace {
    file: SpaceFile,
    schema: FeatureSchema,
    stages: Vec<Stage>,
    /// Per layer type, per category: attribute-derived feature value.
    type_features: Vec<Vec<Option<FeatureValue>>>,
    /// Per constraint, per layer type: the constrained attribute value as a key.
    constraint_keys: Vec<Vec<String>>,
    fingerprint: String,
}

impl PartialEq for SearchSpace {
    fn eq(&self, other: &Self) -> bool {
        self.fingerprint == other.fingerprint
    }
}

impl SearchSpace {
    pub fn new(file: SpaceFile) -> Result<Self, ArchError> {
        let invalid = |msg: String| Err(ArchError::InvalidSpec(msg));
        if file.stages.is_empty() {
            return invalid("space has no stages".into());
        }
        let mut names = BTreeSet::new();
        for cat in &file.features {
            if !names.insert(cat.name.as_str()) {
                return invalid(format!("duplicate feature category {}", cat.name));
            }
        }
        let mut type_index = HashMap::new();
        for (i, lt) in file.layer_types.iter().enumerate() {
            if type_index.insert(lt.name.as_str(), i).is_some() {
                return invalid(format!("duplicate layer type {}", lt.name));
            }
        }

        let max_layers = file.stages.iter().map(|s| s.l_max).max().unwrap_or(1);
        let mut stages = Vec::with_capacity(file.stages.len());
        for (u, s) in file.stages.iter().enumerate() {
            if s.l_min < 1 || s.l_min > s.l_max {
                return invalid(format!("stage {u} has invalid layer bounds [{}, {}]", s.l_min, s.l_max));
            }
            if s.vocab.is_empty() {
                return invalid(format!("stage {u} has an empty vocabulary"));
            }
            let mut vocab = Vec::with_capacity(s.vocab.len());
            let mut seen = BTreeSet::new();
            for name in &s.vocab {
                let Some(&t) = type_index.get(name.as_str()) else {
                    return invalid(format!("stage {u} references unknown layer type {name}"));
                };
                if !seen.insert(t) {
                    return invalid(format!("stage {u} lists layer type {name} twice"));
                }
                vocab.push(t);
            }
            stages.push(Stage { name: s.name.clone(), l_min: s.l_min, l_max: s.l_max, vocab });
        }

        let mut categories = Vec::with_capacity(file.features.len());
        for cat in &file.features {
            let kind = match (&cat.source, &cat.choices, cat.min, cat.max) {
                (FeatureSource::Stage, None, None, None) => FeatureKind::Categorical {
                    choices: file.stages.iter().map(|s| s.name.clone()).collect(),
                },
                (FeatureSource::Layer, None, None, None) => FeatureKind::Categorical {
                    choices: (0..max_layers).map(|l| l.to_string()).collect(),
                },
                (FeatureSource::Attr, Some(choices), None, None) => {
                    if choices.is_empty() {
                        return invalid(format!("feature {} has no choices", cat.name));
                    }
                    FeatureKind::Categorical { choices: choices.clone() }
                }
                (FeatureSource::Attr, None, Some(min), Some(max)) => {
                    if !(min.is_finite() && max.is_finite() && min < max) {
                        return invalid(format!("feature {} has invalid range [{min}, {max}]", cat.name));
                    }
                    FeatureKind::Numeric { min, max }
                }
                _ => {
                    return invalid(format!(
                        "feature {} needs either choices or min/max (attribute sources only)",
                        cat.name
                    ))
                }
            };
            categories.push(FeatureCategory { name: cat.name.clone(), source: cat.source.clone(), kind });
        }
        let schema = FeatureSchema { categories };

        let mut type_features = Vec::with_capacity(file.layer_types.len());
        for lt in &file.layer_types {
            let mut row = Vec::with_capacity(schema.len());
            for cat in &schema.categories {
                if cat.source != FeatureSource::Attr {
                    row.push(None);
                    continue;
                }
                let Some(value) = lt.attrs.get(&cat.name) else {
                    return invalid(format!("layer type {} lacks attribute {}", lt.name, cat.name));
                };
                let fv = match (&cat.kind, value) {
                    (FeatureKind::Categorical { choices }, v) => {
                        let text = v.to_string();
                        match choices.iter().position(|c| *c == text) {
                            Some(i) => FeatureValue::Choice(i),
                            None => {
                                return invalid(format!(
                                    "layer type {} has {}={text}, not among the choices",
                                    lt.name, cat.name
                                ))
                            }
                        }
                    }
                    (FeatureKind::Numeric { min, max }, AttrValue::Number(x)) if *x >= *min && *x <= *max => {
                        FeatureValue::Numeric(*x)
                    }
                    _ => {
                        return invalid(format!("layer type {} has out-of-range {}", lt.name, cat.name));
                    }
                };
                row.push(Some(fv));
            }
            type_features.push(row);
        }

        let mut constraint_keys = Vec::with_capacity(file.constraints.len());
        for c in &file.constraints {
            let mut keys = Vec::with_capacity(file.layer_types.len());
            for lt in &file.layer_types {
                match lt.attrs.get(c.attr()) {
                    Some(v) => keys.push(v.to_string()),
                    None => {
                        return invalid(format!(
                            "constraint {} needs attribute {} on layer type {}",
                            c.name(),
                            c.attr(),
                            lt.name
                        ))
                    }
                }
            }
            if let Constraint::MirrorMultiplier { pairs, .. } = c {
                for &[a, b] in pairs {
                    if a >= stages.len() || b >= stages.len() || a == b {
                        return invalid(format!("mirror_multiplier pair ({a}, {b}) is not a pair of stages"));
                    }
                }
            }
            constraint_keys.push(keys);
        }

        let fingerprint = digest_hex(file.to_toml().as_bytes());
        Ok(Self { file, schema, stages, type_features, constraint_keys, fingerprint })
    }

    pub fn from_toml(text: &str) -> Result<Self, ArchError> {
        Self::new(SpaceFile::from_toml(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ArchError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn file(&self) -> &SpaceFile {
        &self.file
    }

    pub fn name(&self) -> &str {
        &self.file.name
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    pub fn stage(&self, u: usize) -> Result<&Stage, ArchError> {
        self.stages.get(u).ok_or(ArchError::UnknownStage(u))
    }

    pub fn layer_types(&self) -> &[LayerType] {
        &self.file.layer_types
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.file.constraints
    }

    /// Digest of the normalized space definition.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// Feature vector of a node of layer type `layer_type` at position `pos` of stage `u`.
    pub fn node_features(&self, u: usize, pos: usize, layer_type: usize) -> Vec<FeatureValue> {
        self.schema
            .categories
            .iter()
            .zip(&self.type_features[layer_type])
            .map(|(cat, attr)| match cat.source {
                FeatureSource::Stage => FeatureValue::Choice(u),
                FeatureSource::Layer => FeatureValue::Choice(pos),
                FeatureSource::Attr => attr.expect("attribute resolved at validation"),
            })
            .collect()
    }

    /// Value key of constraint `c` for a layer type.
    pub(crate) fn constraint_key(&self, c: usize, layer_type: usize) -> &str {
        &self.constraint_keys[c][layer_type]
    }
}
