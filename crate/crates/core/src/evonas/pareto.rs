use serde::{Deserialize, Serialize};

use super::EvoError;
use crate::archspace::Architecture;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Maximize,
    Minimize,
}

impl Direction {
    /// The value in minimization form.
    pub fn to_min(self, v: f64) -> f64 {
        match self {
            Direction::Maximize => -v,
            Direction::Minimize => v,
        }
    }
}

/// `a` is no worse than `b` everywhere and strictly better somewhere.
pub fn dominates(a: &[f64], b: &[f64], dirs: &[Direction]) -> bool {
    let mut strict = false;
    for ((&x, &y), d) in a.iter().zip(b).zip(dirs) {
        let (x, y) = (d.to_min(x), d.to_min(y));
        if x > y {
            return false;
        }
        strict |= x < y;
    }
    strict
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontMember {
    pub arch: Architecture,
    /// Content hash of the assembled architecture graph.
    pub id: u64,
    pub objectives: Vec<f64>,
}

/// Mutually nondominated evaluated architectures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoFront {
    pub directions: Vec<Direction>,
    pub members: Vec<FrontMember>,
}

impl ParetoFront {
    pub fn new(directions: Vec<Direction>) -> Self {
        Self { directions, members: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn objectives(&self) -> Vec<Vec<f64>> {
        self.members.iter().map(|m| m.objectives.clone()).collect()
    }

    pub fn contains(&self, id: u64) -> bool {
        self.members.iter().any(|m| m.id == id)
    }
}

/// Nondominated set of the front and the candidates; candidates already on the front by id are ignored.
pub fn pareto_merge(front: &ParetoFront, candidates: &[FrontMember]) -> Result<ParetoFront, EvoError> {
    let dirs = &front.directions;
    let mut members = front.members.clone();
    for c in candidates {
        if c.objectives.len() != dirs.len() {
            return Err(EvoError::Arity { expected: dirs.len(), got: c.objectives.len() });
        }
        if members.iter().any(|m| m.id == c.id || dominates(&m.objectives, &c.objectives, dirs)) {
            continue;
        }
        members.retain(|m| !dominates(&c.objectives, &m.objectives, dirs));
        members.push(c.clone());
    }
    Ok(ParetoFront { directions: dirs.clone(), members })
}

/// Exact area dominated by a two-objective front and bounded by `reference`.
pub fn hypervolume(points: &[Vec<f64>], dirs: &[Direction], reference: &[f64]) -> Result<f64, EvoError> {
    if dirs.len() != 2 || reference.len() != 2 {
        return Err(EvoError::Arity { expected: 2, got: dirs.len().max(reference.len()) });
    }
    let r = [dirs[0].to_min(reference[0]), dirs[1].to_min(reference[1])];
    let mut pts: Vec<[f64; 2]> = Vec::with_capacity(points.len());
    for p in points {
        if p.len() != 2 {
            return Err(EvoError::Arity { expected: 2, got: p.len() });
        }
        let q = [dirs[0].to_min(p[0]), dirs[1].to_min(p[1])];
        if q[0] > r[0] || q[1] > r[1] {
            return Err(EvoError::Reference(format!("{p:?} does not dominate the reference {reference:?}")));
        }
        pts.push(q);
    }
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let mut area = 0.0;
    let mut best_y = r[1];
    for (i, p) in pts.iter().enumerate() {
        if p[1] >= best_y {
            continue;
        }
        let next_x = pts[i + 1..].iter().find(|q| q[1] < p[1]).map_or(r[0], |q| q[0]);
        area += (next_x - p[0]) * (r[1] - p[1]);
        best_y = p[1];
    }
    Ok(area)
}
