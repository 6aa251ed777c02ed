use std::rc::Rc;

use autobuild::numerics::{hard_rank, soft_rank, soft_srcc, spearman, Graph, Tensor, Var};
use proptest::prelude::*;

type Builder = dyn Fn(&mut Graph<f64>, &[Var]) -> Var;

/// Compares tape gradients against central finite differences.
fn check_grad(inputs: &[Tensor<f64>], build: &Builder, tol: f64) -> Result<(), String> {
    let eval = |vals: &[Tensor<f64>]| {
        let mut g = Graph::new();
        let vars: Vec<Var> = vals.iter().map(|t| g.param(t.clone())).collect();
        let out = build(&mut g, &vars);
        g.value(out).data()[0]
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = build(&mut g, &vars);
    let grads = g.backward(out).map_err(|e| e.to_string())?;

    let h = 1e-5;
    for (k, input) in inputs.iter().enumerate() {
        let analytic = grads.get(vars[k]).unwrap().data().to_vec();
        let mut numeric = vec![0.0; input.numel()];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += h;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= h;
            *slot = (eval(&plus) - eval(&minus)) / (2.0 * h);
        }
        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = analytic
            .iter()
            .map(|a| a * a)
            .sum::<f64>()
            .sqrt()
            .max(numeric.iter().map(|a| a * a).sum::<f64>().sqrt())
            .max(1e-8);
        if diff > tol * scale + 1e-9 {
            return Err(format!("input {k}: analytic {analytic:?} numeric {numeric:?}"));
        }
    }
    Ok(())
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Tensor<f64>> {
    prop::collection::vec(-2.0f64..2.0, rows * cols).prop_map(move |d| Tensor::matrix(rows, cols, d))
}

fn distinct_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, n).prop_filter("distinct", |v| {
        let mut s = v.clone();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        s.windows(2).all(|w| w[1] - w[0] > 1e-3)
    })
}

#[test]
fn matmul_sum_matches_finite_differences() {
    let a = Tensor::matrix(3, 4, (0..12).map(|i| (i as f64 * 0.37).sin()).collect());
    let b = Tensor::matrix(4, 2, (0..8).map(|i| (i as f64 * 0.71).cos()).collect());
    check_grad(&[a, b], &|g, v| {
        let p = g.matmul(v[0], v[1]);
        g.sum_all(p)
    }, 1e-4)
    .unwrap();
}

#[test]
fn backward_rejects_non_finite_forward() {
    let mut g = Graph::<f64>::new();
    let x = g.param(Tensor::scalar(1e200));
    let y = g.square(x);
    let z = g.sum_all(y);
    assert!(g.backward(z).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn elementwise_ops_gradients(a in matrix(3, 4), b in matrix(3, 4)) {
        check_grad(&[a, b], &|g, v| {
            let s = g.add(v[0], v[1]);
            let d = g.sub(s, v[1]);
            let m = g.mul(d, v[1]);
            let r = g.relu(m);
            let l = g.leaky_relu(d, 0.2);
            let ab = g.abs(v[1]);
            let q = g.square(l);
            let c = g.scale(q, 0.5);
            let c = g.add_scalar(c, 1.0);
            let t = g.add(r, c);
            let t = g.add(t, ab);
            g.mean_all(t)
        }, 1e-4).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn broadcast_and_reduction_gradients(a in matrix(4, 3), row in matrix(1, 3), col in matrix(4, 1)) {
        check_grad(&[a, row, col], &|g, v| {
            let x = g.add_row(v[0], v[1]);
            let y = g.mul_col(x, v[2]);
            let s = g.sum_cols(y);
            let sq = g.square(s);
            g.sum_all(sq)
        }, 1e-4).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn gather_scatter_concat_gradients(a in matrix(4, 2), b in matrix(4, 3)) {
        let idx: Rc<[usize]> = Rc::from(vec![0usize, 2, 2, 3, 1]);
        let dst: Rc<[usize]> = Rc::from(vec![1usize, 0, 1, 2, 2]);
        check_grad(&[a, b], &move |g, v| {
            let c = g.concat_cols(&[v[0], v[1]]);
            let e = g.gather_rows(c, idx.clone());
            let s = g.scatter_add_rows(e, dst.clone(), 3);
            let sq = g.square(s);
            g.sum_all(sq)
        }, 1e-4).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn segment_softmax_gradients(scores in matrix(6, 1), weights in matrix(6, 1)) {
        let seg: Rc<[usize]> = Rc::from(vec![0usize, 0, 1, 1, 1, 2]);
        let w = weights.clone();
        check_grad(&[scores], &move |g, v| {
            let a = g.segment_softmax(v[0], seg.clone(), 3);
            let c = g.constant(w.clone());
            let p = g.mul(a, c);
            g.sum_all(p)
        }, 1e-4).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn attention_gradients(s in matrix(4, 3), t in matrix(4, 3), att in matrix(3, 1), w in matrix(4, 3)) {
        // 0 -> 1 -> 2 -> 3 plus 0 -> 2 and self loops, grouped by destination.
        let src: Rc<[usize]> = Rc::from(vec![0usize, 0, 1, 0, 1, 2, 2, 3]);
        let dst: Rc<[usize]> = Rc::from(vec![0usize, 1, 1, 2, 2, 2, 3, 3]);
        check_grad(&[s, t, att], &move |g, v| {
            let u = g.attention(v[0], v[1], v[2], src.clone(), dst.clone(), 4, 0.2);
            let c = g.constant(w.clone());
            let p = g.mul(u, c);
            g.sum_all(p)
        }, 1e-4).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn attention_matches_composed_ops(s in matrix(4, 3), t in matrix(4, 3), att in matrix(3, 1), w in matrix(4, 3)) {
        let src: Rc<[usize]> = Rc::from(vec![0usize, 0, 1, 0, 1, 2, 2, 3]);
        let dst: Rc<[usize]> = Rc::from(vec![0usize, 1, 1, 2, 2, 2, 3, 3]);
        let run = |fused: bool| {
            let mut g = Graph::new();
            let (vs, vt, va) = (g.param(s.clone()), g.param(t.clone()), g.param(att.clone()));
            let u = if fused {
                g.attention(vs, vt, va, src.clone(), dst.clone(), 4, 0.2)
            } else {
                let se = g.gather_rows(vs, dst.clone());
                let te = g.gather_rows(vt, src.clone());
                let z = g.add(se, te);
                let z = g.leaky_relu(z, 0.2);
                let e = g.matmul(z, va);
                let alpha = g.segment_softmax(e, dst.clone(), 4);
                let m = g.mul_col(te, alpha);
                g.scatter_add_rows(m, dst.clone(), 4)
            };
            let value = g.value(u).data().to_vec();
            let c = g.constant(w.clone());
            let p = g.mul(u, c);
            let out = g.sum_all(p);
            let grads = g.backward(out).unwrap();
            let gs: Vec<Vec<f64>> = [vs, vt, va].iter().map(|&v| grads.get(v).unwrap().data().to_vec()).collect();
            (value, gs)
        };
        let (fv, fg) = run(true);
        let (cv, cg) = run(false);
        for (a, b) in fv.iter().zip(&cv).chain(fg.iter().flatten().zip(cg.iter().flatten())) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn soft_srcc_gradients(scores in distinct_vec(6), targets in distinct_vec(6), eps in 0.05f64..3.0) {
        let x = Tensor::column(scores);
        check_grad(&[x], &move |g, v| g.soft_srcc(v[0], &targets, eps).unwrap(), 1e-4)
            .map_err(TestCaseError::fail)?;
    }

    #[test]
    fn soft_rank_in_permutahedron(scores in prop::collection::vec(-10.0f64..10.0, 2..40), eps in 0.01f64..10.0) {
        let n = scores.len();
        let r = soft_rank(&scores, eps).unwrap();
        let total: f64 = r.iter().sum();
        prop_assert!((total - (n * (n + 1)) as f64 / 2.0).abs() < 1e-9);
        let mut sorted = r.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let (mut acc, mut bound) = (0.0, 0.0);
        for (i, v) in sorted.iter().enumerate() {
            acc += v;
            bound += (n - i) as f64;
            prop_assert!(acc <= bound + 1e-9);
        }
    }

    #[test]
    fn soft_srcc_permutation_equivariant(
        pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..20).prop_shuffle(),
        eps in 0.01f64..5.0,
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
        prop_assume!(hard_rank(&y).iter().any(|&r| r != hard_rank(&y)[0]));
        let base = soft_srcc(&x, &y, eps).unwrap();
        let mut rev = pairs.clone();
        rev.reverse();
        let (xr, yr): (Vec<f64>, Vec<f64>) = rev.into_iter().unzip();
        prop_assert!((soft_srcc(&xr, &yr, eps).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn soft_srcc_self_is_one(x in distinct_vec(8)) {
        prop_assert!((soft_srcc(&x, &x, 1e-6).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn soft_srcc_converges_to_spearman(x in distinct_vec(7), y in distinct_vec(7)) {
        let exact = spearman(&x, &y).unwrap();
        prop_assert!((soft_srcc(&x, &y, 1e-7).unwrap() - exact).abs() < 1e-9);
    }
}
