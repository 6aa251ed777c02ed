use std::collections::BTreeMap;

use autobuild::archspace::{presets, Architecture, SamplingMode, SearchSpace};
use autobuild::bench::{
    label_dataset, parse_target, BenchError, BinOp, Func, OracleDef, SyntheticOracle, Target, TargetExpr,
};
use autobuild::numerics::spearman;
use proptest::prelude::*;

fn metrics(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn eval(text: &str, pairs: &[(&str, f64)]) -> Result<f64, BenchError> {
    parse_target(text)?.eval(&metrics(pairs))
}

#[test]
fn quality_minus_cost_points() {
    let e = "sqrt(pq) - 2*sqrt(flops)";
    let expr = parse_target(e).unwrap();
    assert_eq!(expr.identifiers(), vec!["pq", "flops"]);
    for (pq, flops, want) in [(37.9, 175.1, -20.31), (37.4, 172.9, -20.18), (35.7, 171.3, -20.20)] {
        let got = eval(e, &[("pq", pq), ("flops", flops)]).unwrap();
        assert!((got - want).abs() <= 0.01, "{got} vs {want}");
    }
}

#[test]
fn power_binds_before_division() {
    let expr = parse_target("100^acc/log10(lat)").unwrap();
    match &expr {
        TargetExpr::Bin(BinOp::Div, lhs, rhs) => {
            assert!(matches!(**lhs, TargetExpr::Bin(BinOp::Pow, _, _)));
            assert!(matches!(**rhs, TargetExpr::Call(Func::Log10, _)));
        }
        other => panic!("unexpected tree {other:?}"),
    }
    let v = expr.eval(&metrics(&[("acc", 0.77), ("lat", 10.0)])).unwrap();
    assert!((v - 34.67).abs() <= 0.01, "{v}");
}

#[test]
fn precedence_and_associativity() {
    assert_eq!(eval("2^3^2", &[]).unwrap(), 512.0);
    assert_eq!(eval("-2^2", &[]).unwrap(), -4.0);
    assert_eq!(eval("8 - 3 - 2", &[]).unwrap(), 3.0);
    assert_eq!(eval("8 / 4 / 2", &[]).unwrap(), 1.0);
    assert_eq!(eval("1 + 2 * 3", &[]).unwrap(), 7.0);
    assert_eq!(eval("-3 * -2", &[]).unwrap(), 6.0);
    assert_eq!(eval("(1 + 2) * 3", &[]).unwrap(), 9.0);
    assert_eq!(eval("2^-1", &[]).unwrap(), 0.5);
    assert_eq!(eval("1.5e2 + x", &[("x", 1.0)]).unwrap(), 151.0);
}

#[test]
fn syntax_errors_report_offsets() {
    let offset = |text: &str| match parse_target(text) {
        Err(BenchError::Syntax { offset, .. }) => offset,
        other => panic!("{text:?}: {other:?}"),
    };
    assert_eq!(offset("1 + "), 4);
    assert_eq!(offset(""), 0);
    assert_eq!(offset("(1 + 2"), 6);
    assert_eq!(offset("1 2"), 2);
    assert_eq!(offset("a $ b"), 2);
    assert_eq!(offset("Acc"), 0);
    match parse_target("exp(1)") {
        Err(BenchError::UnknownFunction { name, offset }) => assert_eq!((name.as_str(), offset), ("exp", 0)),
        other => panic!("{other:?}"),
    }
    match Target::parse("score = 1 +") {
        Err(BenchError::Syntax { offset, .. }) => assert_eq!(offset, 11),
        other => panic!("{other:?}"),
    }
}

#[test]
fn evaluation_errors() {
    let domain = |text: &str, pairs: &[(&str, f64)]| matches!(eval(text, pairs), Err(BenchError::Domain(_)));
    assert!(domain("sqrt(x)", &[("x", -1.0)]));
    assert!(domain("log10(x)", &[("x", 0.0)]));
    assert!(domain("1 / x", &[("x", 0.0)]));
    assert!(domain("x ^ 0.5", &[("x", -4.0)]));
    assert!(matches!(eval("x + y", &[("x", 1.0)]), Err(BenchError::Unbound(v)) if v == "y"));
    assert_eq!(eval("x ^ 2", &[("x", -3.0)]).unwrap(), 9.0);
}

#[test]
fn targets_name_themselves() {
    let t = Target::parse("acc").unwrap();
    assert_eq!(t.name, "acc");
    let t = Target::parse("score=100^acc/log10(lat)").unwrap();
    assert_eq!(t.name, "score");
    assert!(Target::parse("1 + acc").is_err());
    assert!(Target::parse("Score=acc").is_err());
}

fn arb_expr() -> impl Strategy<Value = TargetExpr> {
    let leaf = prop_oneof![
        (0u32..1000, 0u32..4).prop_map(|(m, e)| TargetExpr::Num(m as f64 / 10f64.powi(e as i32))),
        prop::sample::select(vec!["acc", "lat", "pq", "flops", "x_1"]).prop_map(|s| TargetExpr::Var(s.into())),
    ];
    leaf.prop_recursive(5, 40, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|e| TargetExpr::Neg(Box::new(e))),
            (
                prop::sample::select(vec![BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Pow]),
                inner.clone(),
                inner.clone()
            )
                .prop_map(|(op, a, b)| TargetExpr::Bin(op, Box::new(a), Box::new(b))),
            (prop::sample::select(vec![Func::Sqrt, Func::Log10]), inner)
                .prop_map(|(f, e)| TargetExpr::Call(f, Box::new(e))),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn printed_trees_parse_back(expr in arb_expr()) {
        let text = expr.to_string();
        let back = parse_target(&text).unwrap();
        prop_assert_eq!(back, expr, "{}", text);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn evaluation_is_pure(a in 0.1f64..100.0, b in 0.1f64..100.0) {
        let expr = parse_target("sqrt(a) * log10(b + 1) - a^0.3").unwrap();
        let m = metrics(&[("a", a), ("b", b)]);
        let first = expr.eval(&m).unwrap();
        prop_assert_eq!(first.to_bits(), expr.eval(&m).unwrap().to_bits());
        let want = a.sqrt() * (b + 1.0).log10() - (0.3 * a.ln()).exp();
        prop_assert!((first - want).abs() <= 1e-12 * (1.0 + want.abs()));
    }
}

fn additive(name: &str, seed: u64) -> SyntheticOracle {
    let mut def = OracleDef::preset(name, seed).unwrap();
    def.noise = 0.0;
    def.interaction = 0.0;
    SyntheticOracle::new(def).unwrap()
}

#[test]
fn noise_free_additive_oracle_sums_contributions() {
    let oracle = additive("mbv3-like", 3);
    let archs = oracle.space().sample_random(200, 1, SamplingMode::UniformSubgraph).unwrap();
    for a in &archs {
        let sum: f64 = a.stages.iter().map(|s| oracle.stage_contribution(s).unwrap()).sum();
        let y = oracle.evaluate(a).unwrap()["acc"];
        assert!((y - (oracle.def().offset + sum)).abs() <= 1e-9, "{y}");
        assert_eq!(y, oracle.true_value(a).unwrap());
    }
}

#[test]
fn single_stage_variation_recovers_contributions() {
    let oracle = additive("toy", 5);
    let space = oracle.space();
    let base = space.sample_random(1, 2, SamplingMode::UniformSubgraph).unwrap().remove(0);
    for u in 0..space.num_stages() {
        let subs: Vec<_> = space.enumerate_stage_subgraphs(u, 1000).unwrap().collect();
        let mut truth = Vec::new();
        let mut labels = Vec::new();
        for s in subs {
            let mut a = base.clone();
            a.stages[u] = s.clone();
            truth.push(oracle.stage_contribution(&s).unwrap());
            labels.push(oracle.noisy_value(&a).unwrap());
        }
        assert!((spearman(&truth, &labels).unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn oracle_is_seeded() {
    let a = SyntheticOracle::preset("pn-like", 7).unwrap();
    let b = SyntheticOracle::preset("pn-like", 7).unwrap();
    let c = SyntheticOracle::preset("pn-like", 8).unwrap();
    let archs = a.space().sample_random(50, 0, SamplingMode::UniformSubgraph).unwrap();
    let eval = |o: &SyntheticOracle| archs.iter().map(|x| o.evaluate(x).unwrap()).collect::<Vec<_>>();
    assert_eq!(eval(&a), eval(&b));
    assert_ne!(eval(&a), eval(&c));
}

#[test]
fn label_spread_matches_configured_scale() {
    let oracle = SyntheticOracle::preset("mbv3-like", 0).unwrap();
    let archs = oracle.space().sample_random(1000, 0, SamplingMode::UniformSubgraph).unwrap();
    let ys: Vec<f64> = archs.iter().map(|a| oracle.noisy_value(a).unwrap()).collect();
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let std = (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / ys.len() as f64).sqrt();
    let scale = oracle.def().scale;
    assert!((0.5 * scale..=2.0 * scale).contains(&std), "std {std}");
}

#[test]
fn cost_grows_with_layers() {
    let oracle = SyntheticOracle::preset("mbv3-like", 0).unwrap();
    let space = oracle.space();
    let short = Architecture::new((0..5).map(|u| autobuild::archspace::ModuleSubgraph::new(u, vec![0, 0])).collect());
    let long = Architecture::new((0..5).map(|u| autobuild::archspace::ModuleSubgraph::new(u, vec![0; 4])).collect());
    assert!(space.is_valid(&short) && space.is_valid(&long));
    let (cs, cl) = (oracle.cost(&short).unwrap(), oracle.cost(&long).unwrap());
    assert!(cs > 0.0 && cl > cs);
}

#[test]
fn oracle_definitions_round_trip_and_validate() {
    for name in autobuild::bench::ORACLE_PRESETS {
        let def = OracleDef::preset(name, 1).unwrap();
        assert_eq!(OracleDef::from_toml(&def.to_toml()).unwrap(), def);
    }
    assert!(OracleDef::preset("nope", 0).is_err());
    let mut bad = OracleDef::preset("toy", 0).unwrap();
    bad.noise = -1.0;
    assert!(matches!(SyntheticOracle::new(bad), Err(BenchError::InvalidOracle(_))));
}

#[test]
fn labeling_adds_derived_targets() {
    let oracle = SyntheticOracle::preset("mbv3-like", 2).unwrap();
    let archs = oracle.space().sample_random(3000, 4, SamplingMode::UniformSubgraph).unwrap();
    let targets: Vec<Target> = ["acc", "score=100^(acc/100)/log10(lat)", "neg_lat=-lat", "mix=acc - 0.1*lat"]
        .iter()
        .map(|t| Target::parse(t).unwrap())
        .collect();
    let records = label_dataset(&oracle, &archs, &targets).unwrap();
    assert_eq!(records.len(), 3000);
    for r in &records {
        assert_eq!(r.metrics.len(), 5);
        assert_eq!(r.metrics["neg_lat"], -r.metrics["lat"]);
    }
    let again = label_dataset(&oracle, &archs, &targets).unwrap();
    let space = SearchSpace::new(presets::mbv3()).unwrap();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    space.write_records(&records, &mut a).unwrap();
    space.write_records(&again, &mut b).unwrap();
    assert_eq!(a, b);
    assert_eq!(space.read_records(&a[..]).unwrap(), records);

    let bad = [Target::parse("bad=log10(acc - 1000)").unwrap()];
    match label_dataset(&oracle, &archs[..3], &bad) {
        Err(BenchError::Record { index, source }) => {
            assert_eq!(index, 0);
            assert!(matches!(*source, BenchError::Domain(_)));
        }
        other => panic!("{other:?}"),
    }
}
