//! Hard and soft ranking, Spearman correlation and its differentiable relaxation.
//!
//! Soft ranks are the Euclidean projection of `scores / eps` onto the
//! permutahedron spanned by `(1, 2, ..., n)`. The projection reduces to an
//! isotonic regression on the sorted scores, solved exactly by
//! pool-adjacent-violators. Ranks are ascending: the smallest score gets the
//! rank closest to 1.

use std::cmp::Ordering;

use super::NumericsError;
use crate::Scalar;

/// Solution of the permutahedron projection, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct SoftRankSolution<T> {
    pub ranks: Vec<T>,
    /// Original indices sorted by descending score.
    order: Vec<usize>,
    /// Pooled blocks over sorted positions, as `(start, len)`.
    blocks: Vec<(usize, usize)>,
    eps: T,
}

impl<T: Scalar> SoftRankSolution<T> {
    /// Vector-Jacobian product: maps `∂L/∂ranks` to `∂L/∂scores`.
    pub fn vjp(&self, grad_ranks: &[T]) -> Vec<T> {
        let n = self.ranks.len();
        let mut out = grad_ranks.to_vec();
        for &(start, len) in &self.blocks {
            let positions = &self.order[start..start + len];
            let mean = positions.iter().map(|&i| grad_ranks[i]).sum::<T>() / T::lit(len as f64);
            for &i in positions {
                out[i] -= mean;
            }
        }
        debug_assert_eq!(out.len(), n);
        for v in &mut out {
            *v /= self.eps;
        }
        out
    }
}

/// Soft ranks of `scores` with regularization strength `eps`.
pub fn soft_rank<T: Scalar>(scores: &[T], eps: T) -> Result<Vec<T>, NumericsError> {
    soft_rank_solution(scores, eps).map(|s| s.ranks)
}

pub fn soft_rank_solution<T: Scalar>(scores: &[T], eps: T) -> Result<SoftRankSolution<T>, NumericsError> {
    let n = scores.len();
    if n < 2 {
        return Err(NumericsError::InvalidArgument(format!("soft_rank needs at least 2 scores, got {n}")));
    }
    if !(eps > T::zero()) || !eps.is_finite() {
        return Err(NumericsError::InvalidArgument(format!("soft_rank eps must be positive, got {eps}")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(NumericsError::InvalidArgument("soft_rank scores must be finite".into()));
    }

    let z: Vec<T> = scores.iter().map(|&s| s / eps).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| z[b].partial_cmp(&z[a]).unwrap_or(Ordering::Equal));

    // Isotonic (non-increasing) regression of y = z_sorted - w with w = (n, n-1, ..., 1).
    let y: Vec<T> = order
        .iter()
        .enumerate()
        .map(|(pos, &i)| z[i] - T::lit((n - pos) as f64))
        .collect();
    let mut blocks: Vec<(usize, usize, T)> = Vec::with_capacity(n);
    for (pos, &value) in y.iter().enumerate() {
        blocks.push((pos, 1, value));
        while blocks.len() >= 2 {
            let (_, len_b, sum_b) = blocks[blocks.len() - 1];
            let (start_a, len_a, sum_a) = blocks[blocks.len() - 2];
            let mean_a = sum_a / T::lit(len_a as f64);
            let mean_b = sum_b / T::lit(len_b as f64);
            if mean_a < mean_b {
                blocks.pop();
                let last = blocks.len() - 1;
                blocks[last] = (start_a, len_a + len_b, sum_a + sum_b);
            } else {
                break;
            }
        }
    }

    let mut ranks = vec![T::zero(); n];
    for &(start, len, sum) in &blocks {
        let v = sum / T::lit(len as f64);
        for &i in &order[start..start + len] {
            ranks[i] = z[i] - v;
        }
    }
    Ok(SoftRankSolution {
        ranks,
        order,
        blocks: blocks.into_iter().map(|(s, l, _)| (s, l)).collect(),
        eps,
    })
}

/// Ascending 1-based ranks; tied values share the mean of their rank block.
pub fn hard_rank<T: Scalar>(values: &[T]) -> Vec<T> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![T::zero(); n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let mean = T::lit((start + 1 + end) as f64 / 2.0);
        for &i in &order[start..end] {
            ranks[i] = mean;
        }
        start = end;
    }
    ranks
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson<T: Scalar>(x: &[T], y: &[T]) -> Option<T> {
    assert_eq!(x.len(), y.len(), "pearson length mismatch");
    let n = T::lit(x.len() as f64);
    if x.len() < 2 {
        return None;
    }
    let mx = x.iter().copied().sum::<T>() / n;
    let my = y.iter().copied().sum::<T>() / n;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= T::zero() || syy <= T::zero() {
        return None;
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    Some(r.max(-T::one()).min(T::one()))
}

/// Exact Spearman rank correlation; `None` when either side is constant.
pub fn spearman<T: Scalar>(x: &[T], y: &[T]) -> Option<T> {
    pearson(&hard_rank(x), &hard_rank(y))
}

/// Pearson correlation between `soft_rank(predicted, eps)` and the hard ranks of `targets`.
pub fn soft_srcc<T: Scalar>(predicted: &[T], targets: &[T], eps: T) -> Result<T, NumericsError> {
    if predicted.len() != targets.len() {
        return Err(NumericsError::ShapeMismatch {
            op: "soft_srcc",
            detail: format!("{} predictions vs {} targets", predicted.len(), targets.len()),
        });
    }
    let target_ranks = hard_rank(targets);
    if target_ranks.iter().all(|&r| r == target_ranks[0]) {
        return Err(NumericsError::DegenerateTargets);
    }
    let ranks = soft_rank(predicted, eps)?;
    Ok(pearson(&ranks, &target_ranks).unwrap_or(T::zero()))
}
