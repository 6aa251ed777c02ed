//! Bundled search spaces.

use std::collections::BTreeMap;

use super::space::{AttrValue, Constraint, FeatureDef, FeatureSource, LayerType, SpaceFile, StageDef};

/// MBConv layer types over kernel {3,5,7} × expansion {3,4,6}.
fn mbconv_types() -> Vec<LayerType> {
    let mut out = Vec::new();
    for k in ["3", "5", "7"] {
        for e in ["3", "4", "6"] {
            let attrs = BTreeMap::from([
                ("kernel".to_string(), AttrValue::Text(k.into())),
                ("expand".to_string(), AttrValue::Text(e.into())),
            ]);
            out.push(LayerType { name: format!("k{k}e{e}"), attrs });
        }
    }
    out
}

fn mbconv_features() -> Vec<FeatureDef> {
    vec![
        FeatureDef::positional("stage", FeatureSource::Stage),
        FeatureDef::positional("layer", FeatureSource::Layer),
        FeatureDef::categorical("kernel", &["3", "5", "7"]),
        FeatureDef::categorical("expand", &["3", "4", "6"]),
    ]
}

fn mbconv_stage(name: String, l_min: usize, l_max: usize, types: &[LayerType]) -> StageDef {
    StageDef { name, l_min, l_max, vocab: types.iter().map(|t| t.name.clone()).collect() }
}

/// Five MBConv stages of 2 to 4 layers.
pub fn mbv3() -> SpaceFile {
    let types = mbconv_types();
    let stages = (1..=5).map(|i| mbconv_stage(format!("stage{i}"), 2, 4, &types)).collect();
    SpaceFile { name: "mbv3".into(), features: mbconv_features(), layer_types: types, stages, constraints: vec![] }
}

/// Five MBConv stages of 2 to 4 layers plus a single-layer sixth stage.
///
/// With `merged`, the last two stages form one stage of 3 to 5 layers.
pub fn proxylessnas(merged: bool) -> SpaceFile {
    let types = mbconv_types();
    let mut stages: Vec<StageDef> = (1..=4).map(|i| mbconv_stage(format!("stage{i}"), 2, 4, &types)).collect();
    if merged {
        stages.push(mbconv_stage("stage5".into(), 3, 5, &types));
    } else {
        stages.push(mbconv_stage("stage5".into(), 2, 4, &types));
        stages.push(mbconv_stage("stage6".into(), 1, 1, &types));
    }
    let name = if merged { "pn-merged" } else { "pn" };
    SpaceFile { name: name.into(), features: mbconv_features(), layer_types: types, stages, constraints: vec![] }
}

/// A small U-Net-style space: residual-conv or attention blocks, one global
/// base channel count, and per-stage multipliers shared by mirrored stages.
pub fn unet_like() -> SpaceFile {
    let mut types = Vec::new();
    for op in ["res", "attn"] {
        for base in [128.0, 256.0] {
            for mult in [1.0, 2.0] {
                let attrs = BTreeMap::from([
                    ("op".to_string(), AttrValue::Text(op.into())),
                    ("base".to_string(), AttrValue::Number(base)),
                    ("mult".to_string(), AttrValue::Number(mult)),
                    ("channels".to_string(), AttrValue::Number(base * mult)),
                ]);
                types.push(LayerType { name: format!("{op}-c{base}-m{mult}"), attrs });
            }
        }
    }
    let names: Vec<String> = types.iter().map(|t| t.name.clone()).collect();
    let stages = ["in1", "in2", "out2", "out1"]
        .iter()
        .map(|s| StageDef { name: (*s).into(), l_min: 1, l_max: 2, vocab: names.clone() })
        .collect();
    SpaceFile {
        name: "unet-like".into(),
        features: vec![
            FeatureDef::positional("stage", FeatureSource::Stage),
            FeatureDef::positional("layer", FeatureSource::Layer),
            FeatureDef::categorical("op", &["res", "attn"]),
            FeatureDef::categorical("base", &["128", "256"]),
            FeatureDef::categorical("mult", &["1", "2"]),
            FeatureDef::numeric("channels", 128.0, 512.0),
        ],
        layer_types: types,
        stages,
        constraints: vec![
            Constraint::ChannelConsistency { attr: "base".into() },
            Constraint::MirrorMultiplier { attr: "mult".into(), pairs: vec![[0, 3], [1, 2]] },
        ],
    }
}

/// Three stages of one or two layers over kernel {3,5} × expansion {3,6}.
pub fn toy() -> SpaceFile {
    let mut types = Vec::new();
    for k in ["3", "5"] {
        for e in ["3", "6"] {
            let attrs = BTreeMap::from([
                ("kernel".to_string(), AttrValue::Text(k.into())),
                ("expand".to_string(), AttrValue::Text(e.into())),
            ]);
            types.push(LayerType { name: format!("k{k}e{e}"), attrs });
        }
    }
    let stages = (1..=3).map(|i| mbconv_stage(format!("stage{i}"), 1, 2, &types)).collect();
    SpaceFile {
        name: "toy".into(),
        features: vec![
            FeatureDef::positional("stage", FeatureSource::Stage),
            FeatureDef::positional("layer", FeatureSource::Layer),
            FeatureDef::categorical("kernel", &["3", "5"]),
            FeatureDef::categorical("expand", &["3", "6"]),
        ],
        layer_types: types,
        stages,
        constraints: vec![],
    }
}

/// Preset names accepted by [`by_name`].
pub const PRESETS: &[&str] = &["mbv3", "pn", "pn-merged", "unet-like", "toy"];

pub fn by_name(name: &str) -> Option<SpaceFile> {
    match name {
        "mbv3" => Some(mbv3()),
        "pn" => Some(proxylessnas(false)),
        "pn-merged" => Some(proxylessnas(true)),
        "unet-like" => Some(unet_like()),
        "toy" => Some(toy()),
        _ => None,
    }
}
