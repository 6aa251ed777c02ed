//! Reverse-mode differentiation over a recorded tape of tensor operations.
//!
//! Nodes are appended in evaluation order, so reverse index order is a valid
//! reverse topological order. Shape mismatches are programming errors and
//! panic; non-finite values are recorded and surfaced by [`Graph::backward`].

use std::collections::BTreeMap;
use std::rc::Rc;

use super::rank::{hard_rank, soft_rank_solution, SoftRankSolution};
use super::{NumericsError, Tensor};
use crate::Scalar;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `[m, n] + [1, n]`
    AddRow(Var, Var),
    /// `[m, n] * [m, 1]`
    MulCol(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    Relu(Var),
    LeakyRelu(Var, T),
    Abs(Var),
    Square(Var),
    /// Per-row sum: `[m, n] -> [m, 1]`.
    SumCols(Var),
    SumAll(Var),
    MeanAll(Var),
    ConcatCols(Vec<Var>),
    GatherRows(Var, Rc<[usize]>),
    ScatterAddRows(Var, Rc<[usize]>),
    SegmentSoftmax(Var, Rc<[usize]>),
    SoftRank(Var, SoftRankSolution<T>),
    /// Pearson correlation against a constant vector; caches `(centered x, normalized centered target, |x_c|, rho)`.
    PearsonConst(Var, Rc<PearsonCache<T>>),
    Attention(Rc<AttentionCache<T>>),
}

struct AttentionCache<T> {
    s: Var,
    t: Var,
    att: Var,
    src: Rc<[usize]>,
    dst: Rc<[usize]>,
    slope: T,
    alpha: Vec<T>,
}

struct PearsonCache<T> {
    centered: Vec<T>,
    target_unit: Vec<T>,
    norm: T,
    rho: T,
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Gradients of a scalar output with respect to every trainable leaf.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: BTreeMap<Var, Tensor<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, var: Var) -> Option<&Tensor<T>> {
        self.grads.get(&var)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor<T>> {
        self.grads.remove(&var)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

/// A recorded computation.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    first_non_finite: Option<(usize, &'static str)>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), first_non_finite: None }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor<T> {
        &self.nodes[var.0].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool, name: &'static str) -> Var {
        if self.first_non_finite.is_none() && !value.is_finite() {
            self.first_non_finite = Some((self.nodes.len(), name));
        }
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn shape2(&self, v: Var) -> (usize, usize) {
        let t = &self.nodes[v.0].value;
        (t.rows(), t.cols())
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true, "param")
    }

    /// Constant leaf; no gradient flows into it.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false, "constant")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        let rg = self.rg(&[a, b]);
        self.push(v, Op::MatMul(a, b), rg, "matmul")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).shape(), self.value(b).shape(), "add shapes");
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let rg = self.rg(&[a, b]);
        self.push(v, Op::Add(a, b), rg, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).shape(), self.value(b).shape(), "sub shapes");
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let rg = self.rg(&[a, b]);
        self.push(v, Op::Sub(a, b), rg, "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).shape(), self.value(b).shape(), "mul shapes");
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let rg = self.rg(&[a, b]);
        self.push(v, Op::Mul(a, b), rg, "mul")
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (m, n) = self.shape2(a);
        assert_eq!(self.shape2(row), (1, n), "add_row bias shape");
        let r = self.value(row).data().to_vec();
        let mut out = self.value(a).clone();
        for i in 0..m {
            for (o, &b) in out.data_mut()[i * n..(i + 1) * n].iter_mut().zip(&r) {
                *o += b;
            }
        }
        let rg = self.rg(&[a, row]);
        self.push(out, Op::AddRow(a, row), rg, "add_row")
    }

    pub fn mul_col(&mut self, a: Var, col: Var) -> Var {
        let (m, n) = self.shape2(a);
        assert_eq!(self.shape2(col), (m, 1), "mul_col column shape");
        let c = self.value(col).data().to_vec();
        let mut out = self.value(a).clone();
        for (i, &s) in c.iter().enumerate() {
            for o in &mut out.data_mut()[i * n..(i + 1) * n] {
                *o *= s;
            }
        }
        let rg = self.rg(&[a, col]);
        self.push(out, Op::MulCol(a, col), rg, "mul_col")
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let v = self.value(a).map(|x| x * s);
        let rg = self.rg(&[a]);
        self.push(v, Op::Scale(a, s), rg, "scale")
    }

    pub fn add_scalar(&mut self, a: Var, s: T) -> Var {
        let v = self.value(a).map(|x| x + s);
        let rg = self.rg(&[a]);
        self.push(v, Op::AddScalar(a), rg, "add_scalar")
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| if x > T::zero() { x } else { T::zero() });
        let rg = self.rg(&[a]);
        self.push(v, Op::Relu(a), rg, "relu")
    }

    /// LeakyReLU; the gradient at exactly 0 takes the negative-slope branch.
    pub fn leaky_relu(&mut self, a: Var, slope: T) -> Var {
        let v = self.value(a).map(|x| if x > T::zero() { x } else { x * slope });
        let rg = self.rg(&[a]);
        self.push(v, Op::LeakyRelu(a, slope), rg, "leaky_relu")
    }

    /// Absolute value; subgradient 0 at 0.
    pub fn abs(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.abs());
        let rg = self.rg(&[a]);
        self.push(v, Op::Abs(a), rg, "abs")
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        let rg = self.rg(&[a]);
        self.push(v, Op::Square(a), rg, "square")
    }

    pub fn sum_cols(&mut self, a: Var) -> Var {
        let (m, n) = self.shape2(a);
        let x = self.value(a).data();
        let out: Vec<T> = (0..m).map(|i| x[i * n..(i + 1) * n].iter().copied().sum()).collect();
        let rg = self.rg(&[a]);
        self.push(Tensor::column(out), Op::SumCols(a), rg, "sum_cols")
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        let rg = self.rg(&[a]);
        self.push(Tensor::scalar(s), Op::SumAll(a), rg, "sum_all")
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let s = t.sum() / T::lit(t.numel() as f64);
        let rg = self.rg(&[a]);
        self.push(Tensor::scalar(s), Op::MeanAll(a), rg, "mean_all")
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols needs inputs");
        let m = self.shape2(parts[0]).0;
        let widths: Vec<usize> = parts
            .iter()
            .map(|&p| {
                let (r, c) = self.shape2(p);
                assert_eq!(r, m, "concat_cols row counts");
                c
            })
            .collect();
        let total: usize = widths.iter().sum();
        let mut out = vec![T::zero(); m * total];
        let mut offset = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let src = self.value(p).data();
            for i in 0..m {
                out[i * total + offset..i * total + offset + w].copy_from_slice(&src[i * w..(i + 1) * w]);
            }
            offset += w;
        }
        let rg = self.rg(parts);
        self.push(Tensor::matrix(m, total, out), Op::ConcatCols(parts.to_vec()), rg, "concat_cols")
    }

    /// `out[e] = a[index[e]]`.
    pub fn gather_rows(&mut self, a: Var, index: Rc<[usize]>) -> Var {
        let (m, n) = self.shape2(a);
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(index.len() * n);
        for &i in index.iter() {
            assert!(i < m, "gather_rows index {i} out of {m} rows");
            out.extend_from_slice(&src[i * n..(i + 1) * n]);
        }
        let rg = self.rg(&[a]);
        self.push(Tensor::matrix(index.len(), n, out), Op::GatherRows(a, index), rg, "gather_rows")
    }

    /// `out[index[e]] += a[e]` into `rows` output rows.
    pub fn scatter_add_rows(&mut self, a: Var, index: Rc<[usize]>, rows: usize) -> Var {
        let (m, n) = self.shape2(a);
        assert_eq!(m, index.len(), "scatter_add_rows index length");
        let src = self.value(a).data();
        let mut out = vec![T::zero(); rows * n];
        for (e, &r) in index.iter().enumerate() {
            assert!(r < rows, "scatter_add_rows target {r} out of {rows}");
            for (o, &v) in out[r * n..(r + 1) * n].iter_mut().zip(&src[e * n..(e + 1) * n]) {
                *o += v;
            }
        }
        let rg = self.rg(&[a]);
        self.push(Tensor::matrix(rows, n, out), Op::ScatterAddRows(a, index), rg, "scatter_add_rows")
    }

    /// Softmax of a `[E, 1]` score column within each segment `segment[e]`.
    pub fn segment_softmax(&mut self, scores: Var, segment: Rc<[usize]>, segments: usize) -> Var {
        let (e, c) = self.shape2(scores);
        assert_eq!(c, 1, "segment_softmax expects a column");
        assert_eq!(e, segment.len(), "segment_softmax segment length");
        let s = self.value(scores).data();
        let mut max = vec![T::neg_infinity(); segments];
        for (i, &g) in segment.iter().enumerate() {
            max[g] = max[g].max(s[i]);
        }
        let ex: Vec<T> = segment.iter().enumerate().map(|(i, &g)| (s[i] - max[g]).exp()).collect();
        let mut denom = vec![T::zero(); segments];
        for (i, &g) in segment.iter().enumerate() {
            denom[g] += ex[i];
        }
        let out: Vec<T> = segment.iter().enumerate().map(|(i, &g)| ex[i] / denom[g]).collect();
        let rg = self.rg(&[scores]);
        self.push(Tensor::column(out), Op::SegmentSoftmax(scores, segment), rg, "segment_softmax")
    }

    /// Attention-weighted message passing over edges `src[e] -> dst[e]`:
    /// `out[v] = Σ_{dst[e]=v} α_e t[src[e]]` where `α` is the softmax over each
    /// destination of `attᵀ LeakyReLU(s[dst[e]] + t[src[e]])`.
    ///
    /// Equivalent to composing gather, add, leaky_relu, matmul,
    /// segment_softmax, mul_col and scatter_add_rows without the edge-sized
    /// intermediates.
    pub fn attention(
        &mut self,
        s: Var,
        t: Var,
        att: Var,
        src: Rc<[usize]>,
        dst: Rc<[usize]>,
        nodes: usize,
        slope: T,
    ) -> Var {
        let (sm, d) = self.shape2(s);
        assert_eq!(self.shape2(t), (sm, d), "attention s/t shapes");
        assert_eq!(sm, nodes, "attention node count");
        assert_eq!(self.shape2(att), (d, 1), "attention vector shape");
        assert_eq!(src.len(), dst.len(), "attention edge lists");
        let (sv, tv, av) = (self.value(s).data(), self.value(t).data(), self.value(att).data());
        let mut score = Vec::with_capacity(src.len());
        for (&a, &b) in src.iter().zip(dst.iter()) {
            assert!(a < nodes && b < nodes, "attention edge ({a}, {b}) out of {nodes} nodes");
            let (tr, sr) = (&tv[a * d..(a + 1) * d], &sv[b * d..(b + 1) * d]);
            let mut e = T::zero();
            for k in 0..d {
                let z = sr[k] + tr[k];
                e += av[k] * if z > T::zero() { z } else { z * slope };
            }
            score.push(e);
        }
        let mut max = vec![T::neg_infinity(); nodes];
        for (&v, &e) in dst.iter().zip(&score) {
            max[v] = max[v].max(e);
        }
        let mut denom = vec![T::zero(); nodes];
        for (e, &v) in score.iter_mut().zip(dst.iter()) {
            *e = (*e - max[v]).exp();
            denom[v] += *e;
        }
        let alpha: Vec<T> = score.iter().zip(dst.iter()).map(|(&e, &v)| e / denom[v]).collect();
        let mut out = vec![T::zero(); nodes * d];
        for ((&a, &b), &w) in src.iter().zip(dst.iter()).zip(&alpha) {
            for (o, &x) in out[b * d..(b + 1) * d].iter_mut().zip(&tv[a * d..(a + 1) * d]) {
                *o += w * x;
            }
        }
        let rg = self.rg(&[s, t, att]);
        let cache = AttentionCache { s, t, att, src, dst, slope, alpha };
        self.push(Tensor::matrix(nodes, d, out), Op::Attention(Rc::new(cache)), rg, "attention")
    }

    /// Soft ranks of a score vector (see [`super::soft_rank`]).
    pub fn soft_rank(&mut self, scores: Var, eps: T) -> Result<Var, NumericsError> {
        let t = self.value(scores);
        let shape = t.shape().to_vec();
        let sol = soft_rank_solution(t.data(), eps)?;
        let value = Tensor::new(shape, sol.ranks.clone())?;
        let rg = self.rg(&[scores]);
        Ok(self.push(value, Op::SoftRank(scores, sol), rg, "soft_rank"))
    }

    /// Pearson correlation between `x` and a constant target vector.
    ///
    /// Returns 0 with zero gradient when `x` has no spread.
    pub fn pearson_const(&mut self, x: Var, target: &[T]) -> Result<Var, NumericsError> {
        let xs = self.value(x).data();
        if xs.len() != target.len() || xs.len() < 2 {
            return Err(NumericsError::ShapeMismatch {
                op: "pearson_const",
                detail: format!("{} values vs {} targets", xs.len(), target.len()),
            });
        }
        let n = T::lit(xs.len() as f64);
        let mt = target.iter().copied().sum::<T>() / n;
        let tc: Vec<T> = target.iter().map(|&t| t - mt).collect();
        let tnorm = tc.iter().map(|&v| v * v).sum::<T>().sqrt();
        if tnorm <= T::zero() {
            return Err(NumericsError::DegenerateTargets);
        }
        let target_unit: Vec<T> = tc.iter().map(|&v| v / tnorm).collect();
        let mx = xs.iter().copied().sum::<T>() / n;
        let centered: Vec<T> = xs.iter().map(|&v| v - mx).collect();
        let norm = centered.iter().map(|&v| v * v).sum::<T>().sqrt();
        let rho = if norm > T::zero() {
            centered.iter().zip(&target_unit).map(|(&a, &b)| a * b).sum::<T>() / norm
        } else {
            T::zero()
        };
        let cache = PearsonCache { centered, target_unit, norm, rho };
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::scalar(rho), Op::PearsonConst(x, Rc::new(cache)), rg, "pearson_const"))
    }

    /// Differentiable Spearman correlation between `predicted` and constant `targets`.
    pub fn soft_srcc(&mut self, predicted: Var, targets: &[T], eps: T) -> Result<Var, NumericsError> {
        let ranks = hard_rank(targets);
        if ranks.iter().all(|&r| r == ranks[0]) {
            return Err(NumericsError::DegenerateTargets);
        }
        let soft = self.soft_rank(predicted, eps)?;
        self.pearson_const(soft, &ranks)
    }

    /// Gradient of the scalar `output` with respect to every trainable leaf.
    pub fn backward(&self, output: Var) -> Result<Gradients<T>, NumericsError> {
        if let Some((node, op)) = self.first_non_finite {
            if node <= output.0 {
                return Err(NumericsError::NonFinite { node, op });
            }
        }
        let out_val = self.value(output);
        if out_val.numel() != 1 {
            return Err(NumericsError::NonScalarOutput(out_val.shape().to_vec()));
        }

        let mut grads: Vec<Option<Tensor<T>>> = (0..=output.0).map(|_| None).collect();
        grads[output.0] = Some(Tensor::new(out_val.shape().to_vec(), vec![T::one()])?);

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }

        let mut out = BTreeMap::new();
        for (idx, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, Op::Leaf) && node.requires_grad {
                let g = grads
                    .get_mut(idx)
                    .and_then(Option::take)
                    .unwrap_or_else(|| Tensor::zeros(node.value.shape()));
                out.insert(Var(idx), g);
            }
        }
        Ok(Gradients { grads: out })
    }

    fn propagate(&self, node: &Node<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        let mut acc = |v: Var, delta: Tensor<T>| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&delta),
                slot => *slot = Some(delta),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if needs(*a) {
                    acc(*a, g.matmul_nt(self.value(*b)));
                }
                if needs(*b) {
                    acc(*b, self.value(*a).matmul_tn(g));
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                if needs(*b) {
                    acc(*b, g.map(|x| -x));
                }
            }
            Op::Mul(a, b) => {
                if needs(*a) {
                    acc(*a, g.zip_map(self.value(*b), |x, y| x * y));
                }
                if needs(*b) {
                    acc(*b, g.zip_map(self.value(*a), |x, y| x * y));
                }
            }
            Op::AddRow(a, row) => {
                acc(*a, g.clone());
                if needs(*row) {
                    let (m, n) = (g.rows(), g.cols());
                    let mut db = vec![T::zero(); n];
                    for i in 0..m {
                        for (d, &x) in db.iter_mut().zip(&g.data()[i * n..(i + 1) * n]) {
                            *d += x;
                        }
                    }
                    acc(*row, Tensor::row(db));
                }
            }
            Op::MulCol(a, col) => {
                let (m, n) = (g.rows(), g.cols());
                let c = self.value(*col).data();
                if needs(*a) {
                    let mut da = g.clone();
                    for (i, &s) in c.iter().enumerate() {
                        for v in &mut da.data_mut()[i * n..(i + 1) * n] {
                            *v *= s;
                        }
                    }
                    acc(*a, da);
                }
                if needs(*col) {
                    let x = self.value(*a).data();
                    let dc: Vec<T> = (0..m)
                        .map(|i| {
                            g.data()[i * n..(i + 1) * n]
                                .iter()
                                .zip(&x[i * n..(i + 1) * n])
                                .map(|(&p, &q)| p * q)
                                .sum()
                        })
                        .collect();
                    acc(*col, Tensor::column(dc));
                }
            }
            Op::Scale(a, s) => acc(*a, g.map(|x| x * *s)),
            Op::AddScalar(a) => acc(*a, g.clone()),
            Op::Relu(a) => {
                acc(*a, g.zip_map(self.value(*a), |d, x| if x > T::zero() { d } else { T::zero() }));
            }
            Op::LeakyRelu(a, slope) => {
                acc(*a, g.zip_map(self.value(*a), |d, x| if x > T::zero() { d } else { d * *slope }));
            }
            Op::Abs(a) => {
                acc(
                    *a,
                    g.zip_map(self.value(*a), |d, x| {
                        if x > T::zero() {
                            d
                        } else if x < T::zero() {
                            -d
                        } else {
                            T::zero()
                        }
                    }),
                );
            }
            Op::Square(a) => acc(*a, g.zip_map(self.value(*a), |d, x| d * (x + x))),
            Op::SumCols(a) => {
                let src = self.value(*a);
                let (m, n) = (src.rows(), src.cols());
                let mut da = Vec::with_capacity(m * n);
                for &d in g.data() {
                    da.extend(std::iter::repeat_n(d, n));
                }
                acc(*a, Tensor::new(src.shape().to_vec(), da).expect("sum_cols grad shape"));
            }
            Op::SumAll(a) => {
                let d = g.data()[0];
                acc(*a, Tensor::filled(self.value(*a).shape(), d));
            }
            Op::MeanAll(a) => {
                let src = self.value(*a);
                let d = g.data()[0] / T::lit(src.numel() as f64);
                acc(*a, Tensor::filled(src.shape(), d));
            }
            Op::ConcatCols(parts) => {
                let (m, total) = (g.rows(), g.cols());
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    if needs(p) {
                        let mut dp = Vec::with_capacity(m * w);
                        for i in 0..m {
                            dp.extend_from_slice(&g.data()[i * total + offset..i * total + offset + w]);
                        }
                        acc(p, Tensor::matrix(m, w, dp));
                    }
                    offset += w;
                }
            }
            Op::GatherRows(a, index) => {
                let src = self.value(*a);
                let (m, n) = (src.rows(), src.cols());
                let mut da = vec![T::zero(); m * n];
                for (e, &i) in index.iter().enumerate() {
                    for (d, &x) in da[i * n..(i + 1) * n].iter_mut().zip(&g.data()[e * n..(e + 1) * n]) {
                        *d += x;
                    }
                }
                acc(*a, Tensor::matrix(m, n, da));
            }
            Op::ScatterAddRows(a, index) => {
                let n = g.cols();
                let mut da = Vec::with_capacity(index.len() * n);
                for &r in index.iter() {
                    da.extend_from_slice(&g.data()[r * n..(r + 1) * n]);
                }
                acc(*a, Tensor::matrix(index.len(), n, da));
            }
            Op::SegmentSoftmax(a, segment) => {
                let y = node.value.data();
                let segments = segment.iter().copied().max().map_or(0, |m| m + 1);
                let mut dot = vec![T::zero(); segments];
                for (i, &s) in segment.iter().enumerate() {
                    dot[s] += y[i] * g.data()[i];
                }
                let da: Vec<T> =
                    segment.iter().enumerate().map(|(i, &s)| y[i] * (g.data()[i] - dot[s])).collect();
                acc(*a, Tensor::column(da));
            }
            Op::SoftRank(a, sol) => {
                let da = sol.vjp(g.data());
                acc(*a, Tensor::new(self.value(*a).shape().to_vec(), da).expect("soft_rank grad shape"));
            }
            Op::PearsonConst(a, cache) => {
                let d = g.data()[0];
                let shape = self.value(*a).shape().to_vec();
                let da: Vec<T> = if cache.norm > T::zero() {
                    let inv = T::one() / cache.norm;
                    cache
                        .centered
                        .iter()
                        .zip(&cache.target_unit)
                        .map(|(&c, &t)| d * (t * inv - cache.rho * c * inv * inv))
                        .collect()
                } else {
                    vec![T::zero(); cache.centered.len()]
                };
                acc(*a, Tensor::new(shape, da).expect("pearson grad shape"));
            }
            Op::Attention(c) => {
                let (sv, tv, av) = (self.value(c.s).data(), self.value(c.t).data(), self.value(c.att).data());
                let (nodes, d) = (g.rows(), g.cols());
                let gd = g.data();
                let mut ds = vec![T::zero(); nodes * d];
                let mut dt = vec![T::zero(); nodes * d];
                let mut datt = vec![T::zero(); d];
                // dL/dα_e, then the softmax correction per destination.
                let galpha: Vec<T> = c
                    .src
                    .iter()
                    .zip(c.dst.iter())
                    .map(|(&a, &b)| gd[b * d..(b + 1) * d].iter().zip(&tv[a * d..(a + 1) * d]).map(|(&x, &y)| x * y).sum())
                    .collect();
                let mut dot = vec![T::zero(); nodes];
                for ((&b, &w), &ga) in c.dst.iter().zip(&c.alpha).zip(&galpha) {
                    dot[b] += w * ga;
                }
                for (e, (&a, &b)) in c.src.iter().zip(c.dst.iter()).enumerate() {
                    let w = c.alpha[e];
                    let gscore = w * (galpha[e] - dot[b]);
                    for k in 0..d {
                        dt[a * d + k] += w * gd[b * d + k];
                        let z = sv[b * d + k] + tv[a * d + k];
                        let (lz, slope) = if z > T::zero() { (z, T::one()) } else { (z * c.slope, c.slope) };
                        datt[k] += gscore * lz;
                        let gz = gscore * av[k] * slope;
                        ds[b * d + k] += gz;
                        dt[a * d + k] += gz;
                    }
                }
                acc(c.s, Tensor::matrix(nodes, d, ds));
                acc(c.t, Tensor::matrix(nodes, d, dt));
                acc(c.att, Tensor::matrix(d, 1, datt));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::scalar(3.0));
        let y = g.square(x);
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn abs_subgradient() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::column(vec![-2.0, 0.0, 4.0]));
        let a = g.abs(x);
        let y = g.sum_all(a);
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn leaky_relu_at_zero_takes_negative_branch() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::column(vec![0.0, 1.0, -1.0]));
        let a = g.leaky_relu(x, 0.2);
        let y = g.sum_all(a);
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.2, 1.0, 0.2]);
    }

    #[test]
    fn non_scalar_output_rejected() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::column(vec![1.0, 2.0]));
        let y = g.relu(x);
        assert!(matches!(g.backward(y), Err(NumericsError::NonScalarOutput(_))));
    }

    #[test]
    fn non_finite_forward_reported() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::scalar(f64::MAX));
        let y = g.square(x);
        assert!(matches!(g.backward(y), Err(NumericsError::NonFinite { .. })));
    }

    #[test]
    fn unused_param_gets_zero_gradient() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::scalar(2.0));
        let unused = g.param(Tensor::column(vec![1.0, 1.0]));
        let y = g.square(x);
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(unused).unwrap().data(), &[0.0, 0.0]);
        assert_eq!(grads.len(), 2);
    }

    #[test]
    fn shared_input_accumulates() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::scalar(3.0));
        let y = g.mul(x, x);
        let z = g.add(y, x);
        let grads = g.backward(z).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[7.0]);
    }
}
