use std::collections::HashSet;

use autobuild::archspace::{
    presets, ArchError, Architecture, ModuleSubgraph, Record, SamplingMode, SearchSpace, SpaceFile, StageDef,
    DEFAULT_ENUM_CAP,
};
use num_bigint::BigUint;
use num_traits::ToPrimitive;
use proptest::prelude::*;

fn space(file: SpaceFile) -> SearchSpace {
    SearchSpace::new(file).unwrap()
}

/// Single-stage MBConv space with the given layer bounds and vocabulary size.
fn single_stage(vocab: usize, l_min: usize, l_max: usize) -> SearchSpace {
    let mut file = presets::mbv3();
    let names: Vec<String> = file.layer_types.iter().take(vocab).map(|t| t.name.clone()).collect();
    file.stages = vec![StageDef { name: "s".into(), l_min, l_max, vocab: names }];
    space(file)
}

fn relative_error(value: &BigUint, expected: f64) -> f64 {
    (value.to_f64().unwrap() - expected).abs() / expected
}

#[test]
fn stage_counts() {
    assert_eq!(single_stage(9, 2, 4).count_stage_subgraphs(0).unwrap(), BigUint::from(7371u32));
    assert_eq!(single_stage(1, 1, 1).count_stage_subgraphs(0).unwrap(), BigUint::from(1u32));
    assert_eq!(single_stage(9, 3, 5).count_stage_subgraphs(0).unwrap(), BigUint::from(66339u32));
    assert_eq!(single_stage(2, 1, 2).count_space_size(), BigUint::from(6u32));
    assert!(matches!(single_stage(2, 1, 2).count_stage_subgraphs(3), Err(ArchError::UnknownStage(3))));
}

#[test]
fn space_sizes() {
    let mbv3 = space(presets::mbv3());
    assert_eq!(mbv3.count_space_size(), BigUint::from(7371u64).pow(5));
    assert!(relative_error(&mbv3.count_space_size(), 2.18e19) < 0.005);
    let pn = space(presets::proxylessnas(false));
    assert!(relative_error(&pn.count_space_size(), 1.96e20) < 0.005);
    let merged = space(presets::proxylessnas(true));
    assert_eq!(merged.count_stage_subgraphs(4).unwrap(), BigUint::from(66339u32));
}

#[test]
fn enumeration_order_and_counts() {
    let s = single_stage(2, 1, 2);
    let listed: Vec<Vec<usize>> = s.enumerate_stage_subgraphs(0, DEFAULT_ENUM_CAP).unwrap().map(|m| m.layers).collect();
    assert_eq!(listed, vec![vec![0], vec![1], vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);

    for file in [presets::mbv3(), presets::proxylessnas(false), presets::proxylessnas(true), presets::unet_like()] {
        let sp = space(file);
        for u in 0..sp.num_stages() {
            let n = sp.enumerate_stage_subgraphs(u, DEFAULT_ENUM_CAP).unwrap().count();
            assert_eq!(BigUint::from(n), sp.count_stage_subgraphs(u).unwrap());
        }
    }
    let pn = space(presets::proxylessnas(false));
    assert_eq!(pn.enumerate_stage_subgraphs(5, DEFAULT_ENUM_CAP).unwrap().count(), 9);
    assert!(matches!(pn.enumerate_stage_subgraphs(0, 100), Err(ArchError::CapExceeded { .. })));
}

#[test]
fn ids_follow_enumeration_order() {
    let sp = space(presets::mbv3());
    for (i, sub) in sp.enumerate_stage_subgraphs(2, DEFAULT_ENUM_CAP).unwrap().enumerate() {
        assert_eq!(sp.subgraph_id(&sub).unwrap(), i as u64);
        assert_eq!(sp.subgraph_from_id(2, i as u64).unwrap(), sub);
    }
    assert!(sp.subgraph_from_id(2, 7371).is_err());
}

#[test]
fn assemble_and_decompose() {
    let sp = space(presets::mbv3());
    let arch = Architecture::new((0..5).map(|u| ModuleSubgraph::new(u, vec![u % 9; 2 + u % 3])).collect());
    let g = sp.assemble(&arch).unwrap();
    assert_eq!(g.num_nodes(), arch.num_layers());
    assert_eq!(g.edges().len(), g.num_nodes() - 1);
    // node (u=1, l=1) is the fourth node: stage 0 has two layers
    let stage_idx = sp.schema().index_of("stage").unwrap();
    let layer_idx = sp.schema().index_of("layer").unwrap();
    use autobuild::archspace::FeatureValue::Choice;
    assert_eq!(g.nodes()[3].features[stage_idx], Choice(1));
    assert_eq!(g.nodes()[3].features[layer_idx], Choice(1));
    assert_eq!(sp.decompose(&g).unwrap(), arch);

    let bad = Architecture::new(vec![ModuleSubgraph::new(0, vec![0, 0])]);
    assert!(matches!(sp.assemble(&bad), Err(ArchError::StageMismatch(_))));
    let mut short = arch.clone();
    short.stages[0].layers = vec![0];
    assert!(matches!(sp.assemble(&short), Err(ArchError::StageMismatch(_))));
}

#[test]
fn unet_constraints_name_the_rule() {
    let sp = space(presets::unet_like());
    let find = |name: &str| sp.stages()[0].vocab.iter().position(|&t| sp.layer_types()[t].name == name).unwrap();
    let res_128_1 = find("res-c128-m1");
    let res_256_1 = find("res-c256-m1");
    let res_128_2 = find("res-c128-m2");
    let ok = Architecture::new((0..4).map(|u| ModuleSubgraph::new(u, vec![res_128_1])).collect());
    sp.validate(&ok).unwrap();

    let mut mixed_base = ok.clone();
    mixed_base.stages[2].layers = vec![res_256_1];
    match sp.assemble(&mixed_base) {
        Err(ArchError::ConstraintViolation { rule, .. }) => assert_eq!(rule, "channel_consistency"),
        other => panic!("unexpected {other:?}"),
    }
    let mut mirrored = ok.clone();
    mirrored.stages[3].layers = vec![res_128_2];
    match sp.assemble(&mirrored) {
        Err(ArchError::ConstraintViolation { rule, .. }) => assert_eq!(rule, "mirror_multiplier"),
        other => panic!("unexpected {other:?}"),
    }
    // unmirrored stages may differ in multiplier
    let mut free = ok.clone();
    free.stages[1].layers = vec![res_128_2];
    free.stages[2].layers = vec![res_128_2];
    sp.validate(&free).unwrap();
}

#[test]
fn unet_valid_count_matches_brute_force() {
    let sp = space(presets::unet_like());
    let all = sp.enumerate_architectures(DEFAULT_ENUM_CAP).unwrap();
    // base (2) × per mirrored pair: multiplier (2) × consistent stage subgraphs (2 + 4) squared
    assert_eq!(all.len(), 2 * (2 * 36) * (2 * 36));
    assert!(all.iter().all(|a| sp.is_valid(a)));
}

#[test]
fn sampling_is_reproducible_and_valid() {
    let sp = space(presets::mbv3());
    let a = sp.sample_random(3000, 11, SamplingMode::UniformSubgraph).unwrap();
    let b = sp.sample_random(3000, 11, SamplingMode::UniformSubgraph).unwrap();
    assert_eq!(a.len(), 3000);
    assert_eq!(a, b);
    assert!(a.iter().all(|x| sp.is_valid(x)));
    for seed in 0..10u64 {
        let x = sp.sample_random(5, seed, SamplingMode::UniformSubgraph).unwrap();
        let y = sp.sample_random(5, seed + 100, SamplingMode::UniformSubgraph).unwrap();
        assert_ne!(x, y);
    }
    let unet = space(presets::unet_like());
    let c = unet.sample_random(200, 3, SamplingMode::UniformDepth).unwrap();
    assert!(c.iter().all(|x| unet.is_valid(x)));

    let single = single_stage(1, 1, 1);
    let only = single.sample_random(1, 0, SamplingMode::UniformSubgraph).unwrap();
    assert_eq!(only[0].stages[0].layers, vec![0]);
}

#[test]
fn sampling_reports_empty_space() {
    let mut file = presets::unet_like();
    // a channel rule on an attribute that differs between every pair of types
    file.constraints.push(autobuild::archspace::Constraint::ChannelConsistency { attr: "channels".into() });
    for s in &mut file.stages {
        s.l_min = 2;
        s.vocab = vec!["res-c128-m1".into(), "res-c256-m2".into()];
    }
    file.stages[0].vocab = vec!["res-c128-m2".into(), "attn-c128-m2".into()];
    let sp = space(file);
    assert!(matches!(
        sp.sample_random(1, 0, SamplingMode::UniformSubgraph),
        Err(ArchError::SamplingExhausted { .. })
    ));
}

#[test]
fn content_hash_has_no_collisions() {
    let mut file = presets::mbv3();
    file.stages.truncate(2);
    for s in &mut file.stages {
        s.l_min = 1;
        s.l_max = 2;
    }
    let sp = space(file);
    let all = sp.enumerate_architectures(DEFAULT_ENUM_CAP).unwrap();
    assert_eq!(all.len(), 90 * 90);
    let ids: HashSet<u64> = all.iter().map(|a| sp.assemble(a).unwrap().id()).collect();
    assert_eq!(ids.len(), all.len());

    let g = sp.assemble(&all[17]).unwrap();
    let json = serde_json::to_string(&g).unwrap();
    let back: autobuild::archspace::ArchGraph = serde_json::from_str(&json).unwrap();
    assert_eq!(back.id(), g.id());
}

#[test]
fn dataset_round_trip_is_bit_exact() {
    let sp = space(presets::mbv3());
    let archs = sp.sample_random(50, 4, SamplingMode::UniformDepth).unwrap();
    let records: Vec<Record> = archs
        .into_iter()
        .enumerate()
        .map(|(i, arch)| Record {
            arch,
            metrics: [("acc".to_string(), 0.1 + i as f64 / 7.0), ("lat".to_string(), (i as f64).sqrt() * 1e-7)]
                .into_iter()
                .collect(),
        })
        .collect();
    let mut buf = Vec::new();
    sp.write_records(&records, &mut buf).unwrap();
    let back = sp.read_records(buf.as_slice()).unwrap();
    assert_eq!(back, records);
    let mut again = Vec::new();
    sp.write_records(&back, &mut again).unwrap();
    assert_eq!(buf, again);

    let err = sp.read_records("{\"arch\":{\"stages\":[[\"k9e9\"]]},\"metrics\":{}}\n".as_bytes());
    assert!(err.is_err());
}

#[test]
fn space_file_round_trip() {
    for name in presets::PRESETS {
        let file = presets::by_name(name).unwrap();
        let text = file.to_toml();
        let back = SpaceFile::from_toml(&text).unwrap();
        assert_eq!(back, file);
        assert_eq!(space(back).fingerprint(), space(file).fingerprint());
    }
    let mut bad = presets::mbv3();
    bad.stages[0].l_min = 5;
    assert!(SearchSpace::new(bad).is_err());
    let mut bad = presets::mbv3();
    bad.stages[1].vocab.push("nope".into());
    assert!(SearchSpace::new(bad).is_err());
}

proptest! {
    #[test]
    fn validator_is_idempotent(seed in 0u64..500) {
        let sp = space(presets::unet_like());
        let arch = sp.sample_random(1, seed, SamplingMode::UniformDepth).unwrap().remove(0);
        prop_assert!(sp.validate(&arch).is_ok());
        prop_assert!(sp.validate(&arch).is_ok());
        let g = sp.assemble(&arch).unwrap();
        prop_assert_eq!(sp.decompose(&g).unwrap(), arch);
    }

    #[test]
    fn hash_sensitive_to_any_layer_change(seed in 0u64..500, stage in 0usize..5, pick in 0usize..9) {
        let sp = space(presets::mbv3());
        let arch = sp.sample_random(1, seed, SamplingMode::UniformSubgraph).unwrap().remove(0);
        let mut other = arch.clone();
        prop_assume!(other.stages[stage].layers[0] != pick);
        other.stages[stage].layers[0] = pick;
        prop_assert_ne!(sp.assemble(&arch).unwrap().id(), sp.assemble(&other).unwrap().id());
    }
}
