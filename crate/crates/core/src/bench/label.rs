use super::{BenchError, SyntheticOracle, TargetExpr};
use crate::archspace::{Architecture, Record};

/// A derived metric: `name = expr` over the oracle's raw metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct Target {
    pub name: String,
    pub expr: TargetExpr,
}

impl Target {
    /// Parses `name=expr`; a bare expression that is a single identifier names itself.
    pub fn parse(text: &str) -> Result<Self, BenchError> {
        let (name, body, shift) = match text.split_once('=') {
            Some((n, b)) => (n.trim().to_string(), b, n.len() + 1),
            None => (String::new(), text, 0),
        };
        let expr = super::parse_target(body).map_err(|e| e.shifted(shift))?;
        let name = if name.is_empty() {
            match &expr {
                TargetExpr::Var(v) => v.clone(),
                _ => return Err(BenchError::InvalidOracle(format!("target {text:?} needs a name: use name=expr"))),
            }
        } else {
            name
        };
        if !name.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_') {
            return Err(BenchError::InvalidOracle(format!("target name {name:?} must be lowercase alphanumeric")));
        }
        Ok(Self { name, expr })
    }
}

/// Evaluates the oracle and every target on each architecture.
pub fn label_dataset(oracle: &SyntheticOracle, archs: &[Architecture], targets: &[Target]) -> Result<Vec<Record>, BenchError> {
    archs
        .iter()
        .enumerate()
        .map(|(index, arch)| {
            let wrap = |e: BenchError| BenchError::Record { index, source: Box::new(e) };
            let mut metrics = oracle.evaluate(arch).map_err(wrap)?;
            for t in targets {
                let v = t.expr.eval(&metrics).map_err(wrap)?;
                metrics.insert(t.name.clone(), v);
            }
            Ok(Record { arch: arch.clone(), metrics })
        })
        .collect()
}
