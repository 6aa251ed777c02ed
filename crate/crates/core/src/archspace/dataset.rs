use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::arch::{Architecture, ModuleSubgraph};
use super::space::SearchSpace;
use super::ArchError;

/// Stage-major layer type names.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodedArch {
    pub stages: Vec<Vec<String>>,
}

/// One labeled architecture.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub arch: Architecture,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Serialize, Deserialize)]
struct RawRecord {
    arch: EncodedArch,
    metrics: BTreeMap<String, f64>,
}

impl SearchSpace {
    pub fn encode(&self, arch: &Architecture) -> EncodedArch {
        EncodedArch {
            stages: arch
                .stages
                .iter()
                .map(|sub| {
                    let vocab = &self.stages()[sub.stage].vocab;
                    sub.layers.iter().map(|&c| self.layer_types()[vocab[c]].name.clone()).collect()
                })
                .collect(),
        }
    }

    pub fn decode(&self, encoded: &EncodedArch) -> Result<Architecture, ArchError> {
        if encoded.stages.len() != self.num_stages() {
            return Err(ArchError::StageMismatch(format!(
                "encoding has {} stages, space has {}",
                encoded.stages.len(),
                self.num_stages()
            )));
        }
        let mut stages = Vec::with_capacity(encoded.stages.len());
        for (u, names) in encoded.stages.iter().enumerate() {
            let vocab = &self.stages()[u].vocab;
            let layers = names
                .iter()
                .map(|name| {
                    vocab
                        .iter()
                        .position(|&t| self.layer_types()[t].name == *name)
                        .ok_or_else(|| ArchError::UnknownLayerType { stage: u, name: name.clone() })
                })
                .collect::<Result<Vec<_>, _>>()?;
            stages.push(ModuleSubgraph::new(u, layers));
        }
        let arch = Architecture::new(stages);
        self.validate(&arch)?;
        Ok(arch)
    }

    /// Writes records as JSON lines.
    pub fn write_records<W: Write>(&self, records: &[Record], mut out: W) -> Result<(), ArchError> {
        for r in records {
            let raw = RawRecord { arch: self.encode(&r.arch), metrics: r.metrics.clone() };
            serde_json::to_writer(&mut out, &raw).map_err(|e| ArchError::Parse(e.to_string()))?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Reads JSON lines, skipping blank lines; errors carry the 1-based line number.
    pub fn read_records<R: BufRead>(&self, input: R) -> Result<Vec<Record>, ArchError> {
        let mut records = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let raw: RawRecord =
                serde_json::from_str(&line).map_err(|e| ArchError::Parse(format!("line {}: {e}", i + 1)))?;
            let arch = self
                .decode(&raw.arch)
                .map_err(|e| ArchError::Parse(format!("line {}: {e}", i + 1)))?;
            records.push(Record { arch, metrics: raw.metrics });
        }
        Ok(records)
    }
}

/// Values of one metric across records.
pub fn metric_values(records: &[Record], metric: &str) -> Result<Vec<f64>, ArchError> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.metrics
                .get(metric)
                .copied()
                .ok_or_else(|| ArchError::Parse(format!("record {i} lacks metric {metric}")))
        })
        .collect()
}
