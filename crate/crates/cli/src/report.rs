use std::fmt::Write as _;

use autobuild::archspace::{EncodedArch, SearchSpace};
use autobuild::evonas::{Direction, ParetoFront};
use serde::{Deserialize, Serialize};

use crate::args::{ReportArgs, ReportFormat, ReportKind};
use crate::commands::load_space;
use crate::ctx::Ctx;
use crate::error::{CliError, Result};

/// Pareto front as written by `nas --front`.
#[derive(Debug, Serialize, Deserialize)]
pub struct FrontFile {
    pub objectives: Vec<String>,
    pub directions: Vec<Direction>,
    pub members: Vec<FrontEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FrontEntry {
    pub id: u64,
    pub arch: EncodedArch,
    pub objectives: Vec<f64>,
}

impl FrontFile {
    /// Members sorted by the first objective, then id.
    pub fn from_front(space: &SearchSpace, front: &ParetoFront, objectives: Vec<String>) -> Self {
        let mut members: Vec<FrontEntry> = front
            .members
            .iter()
            .map(|m| FrontEntry { id: m.id, arch: space.encode(&m.arch), objectives: m.objectives.clone() })
            .collect();
        members.sort_by(|a, b| a.objectives[0].total_cmp(&b.objectives[0]).then(a.id.cmp(&b.id)));
        Self { objectives, directions: front.directions.clone(), members }
    }
}

/// Per-hop SRCC followed by the prediction's, as written by `eval-srcc --out`.
#[derive(Debug, Serialize, Deserialize)]
pub struct SrccFile {
    pub metric: String,
    pub srcc: Vec<f64>,
}

fn sig17(x: f64) -> String {
    format!("{x:.16e}")
}

fn arch_label(arch: &EncodedArch) -> String {
    arch.stages.iter().map(|s| s.join("-")).collect::<Vec<_>>().join("|")
}

fn parse_json<T: for<'de> Deserialize<'de>>(text: &str, what: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| CliError::invalid(format!("not a {what} file: {e}")))
}

pub fn run(mut ctx: Ctx, a: ReportArgs) -> Result<()> {
    ctx.merge_config(serde_json::json!({ "kind": format!("{:?}", a.kind), "format": format!("{:?}", a.format) }));
    let bytes = match (a.kind, a.format) {
        (ReportKind::Front, fmt) => {
            let front: FrontFile = parse_json(&ctx.read(&a.input)?, "front")?;
            if front.objectives.len() != front.directions.len()
                || front.members.iter().any(|m| m.objectives.len() != front.objectives.len())
            {
                return Err(CliError::invalid("front members do not match the objective list"));
            }
            match fmt {
                ReportFormat::Csv => front_csv(&front)?,
                ReportFormat::Svg => front_svg(&front)?.into_bytes(),
            }
        }
        (ReportKind::Srcc, fmt) => {
            let file: SrccFile = parse_json(&ctx.read(&a.input)?, "SRCC")?;
            if file.srcc.len() < 2 {
                return Err(CliError::invalid("an SRCC vector needs at least one hop and the prediction"));
            }
            match fmt {
                ReportFormat::Csv => srcc_csv(&file)?,
                ReportFormat::Svg => srcc_svg(&file).into_bytes(),
            }
        }
        (ReportKind::Table, ReportFormat::Csv) => {
            let space = load_space(&mut ctx, &a.space)?;
            let text = ctx.read(&a.input)?;
            let table = autobuild::scorer::ScoreTable::read_csv(&space, text.as_bytes())?;
            table_csv(&space, &table)?
        }
        (ReportKind::Table, ReportFormat::Svg) => {
            return Err(CliError::invalid("unsupported format: score tables render as csv only"));
        }
    };
    ctx.write(&a.out, &bytes)?;
    Ok(())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(CliError::invalid)
}

pub fn front_csv(front: &FrontFile) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["id".to_string(), "arch".to_string()];
    header.extend(front.objectives.iter().cloned());
    w.write_record(&header).map_err(CliError::invalid)?;
    for m in &front.members {
        let mut row = vec![m.id.to_string(), arch_label(&m.arch)];
        row.extend(m.objectives.iter().map(|&x| sig17(x)));
        w.write_record(&row).map_err(CliError::invalid)?;
    }
    finish(w)
}

pub fn srcc_csv(file: &SrccFile) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["entry", "srcc"]).map_err(CliError::invalid)?;
    for (name, v) in srcc_entries(file) {
        w.write_record([name, sig17(v)]).map_err(CliError::invalid)?;
    }
    finish(w)
}

fn srcc_entries(file: &SrccFile) -> Vec<(String, f64)> {
    let hops = file.srcc.len() - 1;
    file.srcc
        .iter()
        .enumerate()
        .map(|(i, &v)| (if i < hops { format!("hop{i}") } else { "prediction".into() }, v))
        .collect()
}

fn table_csv(space: &SearchSpace, table: &autobuild::scorer::ScoreTable) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["stage", "rank", "subgraph_id", "layer_sequence", "hop", "score"])
        .map_err(CliError::invalid)?;
    for rows in &table.stages {
        let mut sorted: Vec<_> = rows.iter().collect();
        sorted.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.id.cmp(&b.id)));
        for (rank, r) in sorted.into_iter().enumerate() {
            w.write_record([
                r.subgraph.stage.to_string(),
                (rank + 1).to_string(),
                r.id.to_string(),
                space.describe_subgraph(&r.subgraph),
                r.hop.to_string(),
                sig17(r.score),
            ])
            .map_err(CliError::invalid)?;
        }
    }
    finish(w)
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const PAD: f64 = 60.0;

/// Maps a data interval onto `[lo, hi]` pixels, widening degenerate intervals.
struct Axis {
    min: f64,
    max: f64,
    lo: f64,
    hi: f64,
}

impl Axis {
    fn new(values: impl Iterator<Item = f64>, lo: f64, hi: f64) -> Self {
        let (mut min, mut max) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if !min.is_finite() {
            (min, max) = (0.0, 1.0);
        }
        if max - min < 1e-12 {
            let pad = (min.abs() * 0.05).max(0.5);
            (min, max) = (min - pad, max + pad);
        }
        Self { min, max, lo, hi }
    }

    fn map(&self, v: f64) -> f64 {
        self.lo + (v - self.min) / (self.max - self.min) * (self.hi - self.lo)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn svg_open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="15">{}</text>"#, W / 2.0, escape(title));
    s
}

fn axes(s: &mut String, x: Option<&Axis>, y: &Axis, xlabel: &str, ylabel: &str) {
    let (x0, y0) = (PAD, H - PAD);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{}" y2="{y0}" stroke="black"/>"#, W - PAD / 2.0);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{}" stroke="black"/>"#, PAD / 2.0);
    let font = r#"font-family="sans-serif" font-size="11""#;
    if let Some(x) = x {
        for v in [x.min, x.max] {
            let _ = writeln!(s, r#"<text x="{:.2}" y="{}" text-anchor="middle" {font}>{v:.4}</text>"#, x.map(v), y0 + 16.0);
        }
    }
    for v in [y.min, y.max] {
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end" {font}>{v:.4}</text>"#, x0 - 4.0, y.map(v) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" {font}>{}</text>"#, W / 2.0, H - 14.0, escape(xlabel));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})" {font}>{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(ylabel)
    );
}

/// Scatter of the first two objectives, members joined in first-objective order.
pub fn front_svg(front: &FrontFile) -> Result<String> {
    if front.objectives.len() < 2 {
        return Err(CliError::invalid("an svg front needs two objectives"));
    }
    let xs = Axis::new(front.members.iter().map(|m| m.objectives[1]), PAD, W - PAD);
    let ys = Axis::new(front.members.iter().map(|m| m.objectives[0]), H - PAD, PAD);
    let mut s = svg_open(&format!("Pareto front ({} members)", front.members.len()));
    axes(&mut s, Some(&xs), &ys, &front.objectives[1], &front.objectives[0]);
    let mut pts: Vec<(f64, f64)> = front.members.iter().map(|m| (xs.map(m.objectives[1]), ys.map(m.objectives[0]))).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pts.len() > 1 {
        let path: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="steelblue"/>"#, path.join(" "));
    }
    for (x, y) in pts {
        let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="steelblue"/>"#);
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Bar per hop and for the prediction on a fixed [-1, 1] axis.
pub fn srcc_svg(file: &SrccFile) -> String {
    let entries = srcc_entries(file);
    let ys = Axis::new([-1.0, 1.0].into_iter(), H - PAD, PAD);
    let mut s = svg_open(&format!("SRCC with {}", file.metric));
    axes(&mut s, None, &ys, "", "SRCC");
    let xs = Axis::new([0.0, entries.len() as f64].into_iter(), PAD, W - PAD);
    let zero = ys.map(0.0);
    let _ = writeln!(s, r#"<line x1="{PAD}" y1="{zero:.2}" x2="{}" y2="{zero:.2}" stroke="gray"/>"#, W - PAD);
    let width = (xs.map(1.0) - xs.map(0.0)) * 0.7;
    for (i, (name, v)) in entries.iter().enumerate() {
        let cx = xs.map(i as f64 + 0.5);
        let top = ys.map(v.max(0.0));
        let height = (ys.map(v.min(0.0)) - top).abs();
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{top:.2}" width="{width:.2}" height="{height:.2}" fill="steelblue"/>"#,
            cx - width / 2.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{cx:.2}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="11">{name}</text>"#,
            H - PAD + 16.0
        );
    }
    s.push_str("</svg>\n");
    s
}
