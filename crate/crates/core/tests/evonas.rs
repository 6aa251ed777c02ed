use std::collections::HashSet;

use autobuild::archspace::{presets, Architecture, SamplingMode, SearchSpace};
use autobuild::bench::SyntheticOracle;
use autobuild::builder::ReducedSpace;
use autobuild::evonas::{
    dominates, hypervolume, pareto_merge, run_ea, Direction, EvoError, FrontMember, Mutation, ParetoFront,
    SearchConfig, SearchDomain,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MAX_MIN: [Direction; 2] = [Direction::Maximize, Direction::Minimize];

fn member(id: u64, objectives: Vec<f64>) -> FrontMember {
    FrontMember { arch: Architecture::new(vec![]), id, objectives }
}

fn brute_front(points: &[(u64, Vec<f64>)], dirs: &[Direction]) -> Vec<u64> {
    let mut ids: Vec<u64> = points
        .iter()
        .filter(|(_, p)| !points.iter().any(|(_, q)| dominates(q, p, dirs)))
        .map(|(id, _)| *id)
        .collect();
    ids.sort();
    ids
}

fn ids(front: &ParetoFront) -> Vec<u64> {
    let mut v: Vec<u64> = front.members.iter().map(|m| m.id).collect();
    v.sort();
    v
}

#[test]
fn dominated_points_leave_the_front() {
    let front = ParetoFront::new(MAX_MIN.to_vec());
    let pts = [member(0, vec![1.0, 1.0]), member(1, vec![2.0, 2.0]), member(2, vec![2.0, 1.0])];
    let merged = pareto_merge(&front, &pts).unwrap();
    assert_eq!(merged.objectives(), vec![vec![2.0, 1.0]]);
    assert_eq!(pareto_merge(&merged, &[]).unwrap(), merged);
    assert!(matches!(pareto_merge(&merged, &[member(9, vec![1.0])]), Err(EvoError::Arity { expected: 2, got: 1 })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn merge_matches_brute_force(seed in 0u64..100_000, chunks in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points: Vec<(u64, Vec<f64>)> = (0..200u64)
            .map(|i| (i, vec![rng.random_range(0..40) as f64, rng.random_range(0..40) as f64]))
            .collect();
        let mut front = ParetoFront::new(MAX_MIN.to_vec());
        let size = 200usize.div_ceil(chunks);
        for (k, chunk) in points.chunks(size).enumerate() {
            let batch: Vec<FrontMember> = chunk.iter().map(|(i, p)| member(*i, p.clone())).collect();
            front = pareto_merge(&front, &batch).unwrap();
            let seen = &points[..(k * size + chunk.len())];
            prop_assert_eq!(ids(&front), brute_front(seen, &MAX_MIN));
        }
    }
}

#[test]
fn rectangle_and_empty_hypervolume() {
    assert_eq!(hypervolume(&[vec![2.0, 1.0]], &MAX_MIN, &[0.0, 3.0]).unwrap(), 4.0);
    assert_eq!(hypervolume(&[], &MAX_MIN, &[0.0, 3.0]).unwrap(), 0.0);
    assert!(matches!(hypervolume(&[vec![-1.0, 1.0]], &MAX_MIN, &[0.0, 3.0]), Err(EvoError::Reference(_))));
}

#[test]
fn staircase_hypervolume_matches_sampling() {
    let pts = vec![vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 2.5]];
    let dirs = [Direction::Maximize, Direction::Minimize];
    let reference = [0.0, 4.0];
    let exact = hypervolume(&pts, &dirs, &reference).unwrap();
    // Box [0, 3] x [1, 4] contains everything dominated.
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n = 400_000;
    let hits = (0..n)
        .filter(|_| {
            let (x, y) = (rng.random_range(0.0..3.0), rng.random_range(1.0..4.0));
            pts.iter().any(|p| p[0] >= x && p[1] <= y)
        })
        .count();
    let estimate = 9.0 * hits as f64 / n as f64;
    assert!((estimate - exact).abs() / exact < 0.01, "{estimate} vs {exact}");
    assert!((exact - (1.0 * 3.0 + 1.0 * 2.0 + 1.0 * 1.5)).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hypervolume_ignores_dominated_points(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Vec<f64>> = (0..30).map(|_| vec![rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)]).collect();
        let all: Vec<(u64, Vec<f64>)> = pts.iter().cloned().enumerate().map(|(i, p)| (i as u64, p)).collect();
        let keep = brute_front(&all, &MAX_MIN);
        let nd: Vec<Vec<f64>> = keep.iter().map(|&i| pts[i as usize].clone()).collect();
        let r = [0.0, 10.0];
        let (a, b) = (hypervolume(&pts, &MAX_MIN, &r).unwrap(), hypervolume(&nd, &MAX_MIN, &r).unwrap());
        prop_assert!((a - b).abs() < 1e-9);
        prop_assert!((0.0..=100.0).contains(&a));
    }
}

#[test]
fn default_budget() {
    let cfg = SearchConfig::default();
    assert_eq!((cfg.initial_archs, cfg.iters, cfg.evals_per_iter), (50, 4, 50));
    assert_eq!(cfg.budget(), 250);
    assert!(SearchConfig { iters: 0, ..cfg }.validate().is_err());
}

fn stage_ids(space: &SearchSpace, a: &Architecture) -> Vec<u64> {
    a.stages.iter().map(|s| space.subgraph_id(s).unwrap()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stage_swap_changes_one_stage(seed in 0u64..10_000) {
        let space = SearchSpace::new(presets::mbv3()).unwrap();
        let dom = SearchDomain::full(&space);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = dom.sample(&mut rng).unwrap();
        let b = dom.mutate(&a, Mutation::StageSwap, &mut rng).unwrap();
        let diff = stage_ids(&space, &a).iter().zip(stage_ids(&space, &b)).filter(|(x, y)| **x != *y).count();
        prop_assert_eq!(diff, 1);
        prop_assert!(space.is_valid(&b));
    }

    #[test]
    fn layer_edit_changes_one_layer(seed in 0u64..10_000) {
        let space = SearchSpace::new(presets::unet_like()).unwrap();
        let dom = SearchDomain::full(&space);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = dom.sample(&mut rng).unwrap();
        let b = dom.mutate(&a, Mutation::LayerEdit, &mut rng).unwrap();
        prop_assert!(space.is_valid(&b));
        let changed: Vec<usize> = (0..4).filter(|&u| a.stages[u] != b.stages[u]).collect();
        prop_assert_eq!(changed.len(), 1);
        let (x, y) = (&a.stages[changed[0]].layers, &b.stages[changed[0]].layers);
        let one_edit = match x.len() as i64 - y.len() as i64 {
            0 => x.iter().zip(y).filter(|(p, q)| p != q).count() == 1,
            1 => (0..x.len()).any(|i| { let mut z = x.clone(); z.remove(i); &z == y }),
            -1 => (0..y.len()).any(|i| { let mut z = y.clone(); z.remove(i); &z == x }),
            _ => false,
        };
        prop_assert!(one_edit, "{:?} -> {:?}", x, y);
    }

    #[test]
    fn reduced_swaps_stay_in_the_reduction(seed in 0u64..10_000) {
        let space = SearchSpace::new(presets::mbv3()).unwrap();
        let mut reduced = ReducedSpace::full(&space, 1_000_000).unwrap();
        for (u, ids) in reduced.stages.iter_mut().enumerate() {
            *ids = (u as u64 * 10..u as u64 * 10 + 4).collect();
        }
        let dom = SearchDomain::reduced(&space, &reduced).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = dom.sample(&mut rng).unwrap();
        let b = dom.mutate(&a, Mutation::StageSwap, &mut rng).unwrap();
        prop_assert!(a.stages.iter().chain(&b.stages).all(|s| reduced.contains(s, &space)));
    }
}

#[test]
fn layer_edit_respects_length_bounds() {
    let space = SearchSpace::new(presets::mbv3()).unwrap();
    let dom = SearchDomain::full(&space);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let base = space.sample_random(1, 0, SamplingMode::UniformSubgraph).unwrap().remove(0);
    let mut at_min = base.clone();
    for s in &mut at_min.stages {
        s.layers.truncate(2);
    }
    for _ in 0..300 {
        let b = dom.mutate(&at_min, Mutation::LayerEdit, &mut rng).unwrap();
        assert!(b.stages.iter().all(|s| (2..=4).contains(&s.len())));
    }
}

#[test]
fn mutation_fails_when_nothing_else_is_valid() {
    let space = SearchSpace::new(presets::toy()).unwrap();
    let mut reduced = ReducedSpace::full(&space, 100).unwrap();
    for ids in &mut reduced.stages {
        ids.truncate(1);
    }
    let dom = SearchDomain::reduced(&space, &reduced).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let a = dom.sample(&mut rng).unwrap();
    assert!(matches!(dom.mutate(&a, Mutation::StageSwap, &mut rng), Err(EvoError::NoMutation(_))));
}

fn bi_objective(oracle: &SyntheticOracle) -> impl FnMut(&Architecture) -> Result<Vec<f64>, String> + '_ {
    move |a| {
        let m = oracle.evaluate(a).map_err(|e| e.to_string())?;
        Ok(vec![m["acc"], m["lat"]])
    }
}

#[test]
fn search_spends_exactly_the_budget() {
    let oracle = SyntheticOracle::preset("mbv3-like", 1).unwrap();
    let dom = SearchDomain::full(oracle.space());
    let mut calls = 0;
    let mut seen = HashSet::new();
    let mut eval = bi_objective(&oracle);
    let res = run_ea(
        &dom,
        |a: &Architecture| {
            calls += 1;
            assert!(seen.insert(a.clone()), "architecture evaluated twice");
            eval(a)
        },
        &SearchConfig::default(),
    )
    .unwrap();
    assert_eq!(calls, 250);
    assert_eq!(res.log.len(), 250);
    assert_eq!(res.history.len(), 5);
    let space = oracle.space();
    for e in &res.log {
        assert!(space.is_valid(&space.decode(&e.arch).unwrap()));
    }
    let hv: Vec<f64> = res.history.iter().map(|f| hypervolume(f, &MAX_MIN, &[70.0, 200.0]).unwrap()).collect();
    assert!(hv.windows(2).all(|w| w[1] >= w[0]), "{hv:?}");
    let objs: Vec<(u64, Vec<f64>)> = res.log.iter().map(|e| (e.id, e.objectives.clone())).collect();
    assert_eq!(ids(&res.front), brute_front(&objs, &MAX_MIN));
}

#[test]
fn search_is_deterministic() {
    let oracle = SyntheticOracle::preset("pn-like", 2).unwrap();
    let dom = SearchDomain::full(oracle.space());
    let cfg = SearchConfig { mutation: Mutation::LayerEdit, seed: 5, ..Default::default() };
    let a = run_ea(&dom, bi_objective(&oracle), &cfg).unwrap();
    let b = run_ea(&dom, bi_objective(&oracle), &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn exhaustive_budget_finds_the_true_front() {
    let oracle = SyntheticOracle::preset("toy", 3).unwrap();
    let space = oracle.space();
    let all = space.enumerate_architectures(10_000).unwrap();
    let truth: Vec<(u64, Vec<f64>)> = all
        .iter()
        .map(|a| {
            let m = oracle.evaluate(a).unwrap();
            (space.assemble(a).unwrap().id(), vec![m["acc"], m["lat"]])
        })
        .collect();
    let cfg = SearchConfig { initial_archs: 4000, iters: 8, evals_per_iter: 1000, seed: 1, ..Default::default() };
    assert!(cfg.budget() >= all.len());
    let res = run_ea(&SearchDomain::full(space), bi_objective(&oracle), &cfg).unwrap();
    assert_eq!(ids(&res.front), brute_front(&truth, &MAX_MIN));
}

#[test]
fn evaluator_failures_name_the_architecture() {
    let space = SearchSpace::new(presets::toy()).unwrap();
    let dom = SearchDomain::full(&space);
    let err = run_ea(&dom, |_: &Architecture| Err::<Vec<f64>, _>("boom"), &SearchConfig::default()).unwrap_err();
    assert!(matches!(err, EvoError::Evaluator { ref msg, .. } if msg == "boom"), "{err}");
    let err = run_ea(&dom, |_: &Architecture| Ok::<_, String>(vec![1.0]), &SearchConfig::default()).unwrap_err();
    assert!(matches!(err, EvoError::Arity { expected: 2, got: 1 }));
    let err = run_ea(&dom, |_: &Architecture| Ok::<_, String>(vec![f64::NAN, 1.0]), &SearchConfig::default()).unwrap_err();
    assert!(matches!(err, EvoError::Evaluator { .. }));
}

#[test]
fn budget_beyond_a_reduced_space_evaluates_all_of_it() {
    let oracle = SyntheticOracle::preset("toy", 4).unwrap();
    let space = oracle.space();
    let mut reduced = ReducedSpace::full(space, 100).unwrap();
    for ids in &mut reduced.stages {
        ids.truncate(3);
    }
    let dom = SearchDomain::reduced(space, &reduced).unwrap();
    let res = run_ea(&dom, bi_objective(&oracle), &SearchConfig::default()).unwrap();
    assert_eq!(res.log.len(), 27);
    assert!(res.cache_hits > 0);
    let truth: Vec<(u64, Vec<f64>)> = res.log.iter().map(|e| (e.id, e.objectives.clone())).collect();
    assert_eq!(ids(&res.front), brute_front(&truth, &MAX_MIN));
}
