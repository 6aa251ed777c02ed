use std::collections::BTreeMap;
use std::path::Path;

use autobuild::archspace::{metric_values, presets, Architecture, Record, SamplingMode, SearchSpace};
use autobuild::bench::{label_dataset, OracleDef, SyntheticOracle, Target};
use autobuild::builder::{build_top, enumerate_reduced, reduce_space, union_spaces, ReducedSpace, Selection};
use autobuild::evonas::{run_ea, Mutation, SearchConfig, SearchDomain};
use autobuild::predictor::{eval_srcc, train, Aggregation, EncodedGraph, LossKind, PredictorConfig, PredictorModel};
use autobuild::scorer::{
    build_score_table, feature_importance, fit_statistics, train_ensemble, EnsembleWeights, ScoreMode, ScoreTable,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::args::*;
use crate::ctx::Ctx;
use crate::error::{CliError, Result};
use crate::report::{self, FrontFile, SrccFile};

const ENSEMBLE_FORMAT: &str = "autobuild-ensemble";
const ENSEMBLE_VERSION: u32 = 1;

pub fn run(cli: Cli) -> Result<()> {
    let out_dir = cli.out_dir;
    let ctx = |name: &str| Ctx::new(name, out_dir.clone());
    match cli.command {
        Command::Space(SpaceCmd::Gen { preset, out }) => space_gen(ctx("space gen"), &preset, &out),
        Command::Space(SpaceCmd::Count { space }) => space_count(ctx("space count"), &space),
        Command::Oracle(OracleCmd::Gen { preset, seed, noise, interaction, out }) => {
            oracle_gen(ctx("oracle gen"), &preset, seed, noise, interaction, &out)
        }
        Command::Sample(a) => sample(ctx("sample"), a),
        Command::Label(a) => label(ctx("label"), a),
        Command::Train(a) => train_cmd(ctx("train"), a),
        Command::EvalSrcc(a) => eval_srcc_cmd(ctx("eval-srcc"), a),
        Command::Stats(a) => stats(ctx("stats"), a),
        Command::Score(a) => score(ctx("score"), a),
        Command::FeatImportance(a) => feat_importance(ctx("feat-importance"), a),
        Command::Reduce(a) => reduce(ctx("reduce"), a),
        Command::Union(a) => union(ctx("union"), a),
        Command::Build(a) => build(ctx("build"), a),
        Command::Enumerate(a) => enumerate(ctx("enumerate"), a),
        Command::Nas(a) => nas(ctx("nas"), a),
        Command::Ensemble(EnsembleCmd::Train(a)) => ensemble_train(ctx("ensemble train"), a),
        Command::Ensemble(EnsembleCmd::Score(a)) => ensemble_score(ctx("ensemble score"), a),
        Command::Report(a) => report::run(ctx("report"), a),
    }
}

pub fn load_space(ctx: &mut Ctx, src: &SpaceSource) -> Result<SearchSpace> {
    match (&src.spec, &src.preset) {
        (Some(path), _) => Ok(SearchSpace::from_toml(&ctx.read(path)?)?),
        (None, Some(name)) => {
            let file = presets::by_name(name).ok_or_else(|| {
                CliError::invalid(format!("unknown space preset {name:?}; expected one of {}", presets::PRESETS.join(", ")))
            })?;
            ctx.config["space_preset"] = json!(name);
            Ok(SearchSpace::new(file)?)
        }
        (None, None) => Err(CliError::Usage("a search space is required: pass --spec FILE or --preset NAME".into())),
    }
}

fn load_records(ctx: &mut Ctx, space: &SearchSpace, path: &Path) -> Result<Vec<Record>> {
    let text = ctx.read(path)?;
    let records = space.read_records(text.as_bytes())?;
    if records.is_empty() {
        return Err(CliError::invalid(format!("{} holds no records", path.display())));
    }
    Ok(records)
}

fn load_model(ctx: &mut Ctx, path: &Path, space: Option<&SearchSpace>) -> Result<PredictorModel> {
    let text = ctx.read(path)?;
    Ok(PredictorModel::from_json(&text, space.map(SearchSpace::schema))?)
}

fn load_table(ctx: &mut Ctx, space: &SearchSpace, path: &Path) -> Result<ScoreTable> {
    let text = ctx.read(path)?;
    Ok(ScoreTable::read_csv(space, text.as_bytes())?)
}

fn load_reduced(ctx: &mut Ctx, space: &SearchSpace, path: &Path) -> Result<ReducedSpace> {
    let reduced = ReducedSpace::from_toml(&ctx.read(path)?)?;
    reduced.check(space)?;
    Ok(reduced)
}

fn load_oracle(ctx: &mut Ctx, path: &Path) -> Result<SyntheticOracle> {
    Ok(SyntheticOracle::new(OracleDef::from_toml(&ctx.read(path)?)?)?)
}

fn records_bytes(space: &SearchSpace, records: &[Record]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    space.write_records(records, &mut buf)?;
    Ok(buf)
}

fn unlabeled(archs: impl IntoIterator<Item = Architecture>) -> Vec<Record> {
    archs.into_iter().map(|arch| Record { arch, metrics: BTreeMap::new() }).collect()
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("config serializes")
}

fn from_toml<T: for<'de> Deserialize<'de>>(ctx: &mut Ctx, path: &Path) -> Result<T> {
    let text = ctx.read(path)?;
    toml::from_str(&text).map_err(|e| CliError::invalid(format!("{}: {}", path.display(), e.message())))
}

/// Defaults, then the `--config` file, then explicit flags.
fn predictor_config(ctx: &mut Ctx, flags: &PredictorFlags) -> Result<PredictorConfig> {
    let mut cfg: PredictorConfig = match &flags.config {
        Some(path) => from_toml(ctx, path)?,
        None => PredictorConfig::default(),
    };
    macro_rules! set {
        ($($flag:ident => $field:expr),* $(,)?) => {$(
            if let Some(v) = flags.$flag {
                $field = v.into();
            }
        )*};
    }
    set!(hops => cfg.hops, hidden => cfg.hidden, epochs => cfg.epochs, batch_size => cfg.batch_size,
         lr => cfg.optimizer.lr, weight_decay => cfg.optimizer.weight_decay, rank_eps => cfg.rank_eps,
         seed => cfg.seed);
    if let Some(a) = flags.aggregation {
        cfg.aggregation = match a {
            AggregationArg::Mean => Aggregation::Mean,
            AggregationArg::Sum => Aggregation::Sum,
        };
    }
    if let Some(l) = flags.loss {
        cfg.loss = match l {
            LossArg::Ranked => LossKind::Ranked,
            LossArg::MseOnly => LossKind::MseOnly,
            LossArg::MaeRank => LossKind::MaeRank,
        };
    }
    cfg.validate()?;
    ctx.seed = Some(cfg.seed);
    ctx.config["predictor"] = to_value(&cfg);
    Ok(cfg)
}

fn encode(model: &PredictorModel, space: &SearchSpace, records: &[Record]) -> Result<Vec<EncodedGraph>> {
    records.iter().map(|r| Ok(model.encode(&space.assemble(&r.arch)?)?)).collect()
}

fn score_mode(m: ModeArg) -> ScoreMode {
    match m {
        ModeArg::Raw => ScoreMode::Raw,
        ModeArg::Shifted => ScoreMode::Shifted,
        ModeArg::Zscore => ScoreMode::ZScore,
        ModeArg::ZscoreEnum => ScoreMode::ZScoreEnumerated,
    }
}

/// `1.234e19` style rendering of a decimal integer string.
fn scientific(digits: &str) -> String {
    if digits.len() <= 6 {
        return digits.into();
    }
    let (head, tail) = digits.split_at(1);
    format!("{head}.{}e{}", &tail[..3], digits.len() - 1)
}

fn space_gen(mut ctx: Ctx, preset: &str, out: &Path) -> Result<()> {
    let file = presets::by_name(preset).ok_or_else(|| {
        CliError::invalid(format!("unknown space preset {preset:?}; expected one of {}", presets::PRESETS.join(", ")))
    })?;
    SearchSpace::new(file.clone())?;
    ctx.merge_config(json!({ "preset": preset }));
    ctx.write(out, file.to_toml().as_bytes())?;
    Ok(())
}

fn space_count(mut ctx: Ctx, src: &SpaceSource) -> Result<()> {
    let space = load_space(&mut ctx, src)?;
    for (u, stage) in space.stages().iter().enumerate() {
        println!("stage {u} {}: {}", stage.name, space.count_stage_subgraphs(u)?);
    }
    let total = space.count_space_size().to_string();
    println!("total: {total} ({})", scientific(&total));
    Ok(())
}

fn oracle_gen(
    mut ctx: Ctx,
    preset: &str,
    seed: u64,
    noise: Option<f64>,
    interaction: Option<f64>,
    out: &Path,
) -> Result<()> {
    let mut def = OracleDef::preset(preset, seed)?;
    if let Some(n) = noise {
        def.noise = n;
    }
    if let Some(i) = interaction {
        def.interaction = i;
    }
    SyntheticOracle::new(def.clone())?;
    ctx.seed = Some(seed);
    ctx.merge_config(json!({ "preset": preset, "noise": def.noise, "interaction": def.interaction }));
    ctx.write(out, def.to_toml().as_bytes())?;
    Ok(())
}

fn sample(mut ctx: Ctx, a: SampleArgs) -> Result<()> {
    let space = load_space(&mut ctx, &a.space)?;
    let mode = match a.mode {
        SamplingArg::UniformSubgraph => SamplingMode::UniformSubgraph,
        SamplingArg::UniformDepth => SamplingMode::UniformDepth,
    };
    let archs = space.sample_random(a.n, a.seed, mode)?;
    ctx.seed = Some(a.seed);
    ctx.config["n"] = json!(a.n);
    ctx.config["mode"] = json!(format!("{:?}", a.mode));
    ctx.write(&a.out, &records_bytes(&space, &unlabeled(archs))?)?;
    Ok(())
}

fn label(mut ctx: Ctx, a: LabelArgs) -> Result<()> {
    let oracle = load_oracle(&mut ctx, &a.oracle)?;
    let space = oracle.space();
    let records = load_records(&mut ctx, space, &a.archs)?;
    let targets = a.targets.iter().map(|t| Target::parse(t)).collect::<std::result::Result<Vec<_>, _>>()?;
    let archs: Vec<Architecture> = records.into_iter().map(|r| r.arch).collect();
    let labeled = label_dataset(&oracle, &archs, &targets)?;
    ctx.seed = Some(oracle.def().seed);
    ctx.merge_config(json!({ "targets": a.targets }));
    ctx.write(&a.out, &records_bytes(space, &labeled)?)?;
    Ok(())
}

fn train_cmd(mut ctx: Ctx, a: TrainArgs) -> Result<()> {
    let space = load_space(&mut ctx, &a.space)?;
    let cfg = predictor_config(&mut ctx, &a.predictor)?;
    ctx.config["metric"] = json!(a.data.metric);
    let records = load_records(&mut ctx, &space, &a.data.data)?;
    let labels = metric_values(&records, &a.data.metric)?;
    let probe = PredictorModel::new(&cfg, space.schema())?;
    let graphs = encode(&probe, &space, &records)?;
    let test = match &a.test_data {
        Some(path) => {
            let test = load_records(&mut ctx, &space, path)?;
            Some((encode(&probe, &space, &test)?, metric_values(&test, &a.data.metric)?))
        }
        None => None,
    };
    let (model, report) =
        train(space.schema(), &graphs, &labels, test.as_ref().map(|(g, y)| (g.as_slice(), y.as_slice())), &cfg)?;
    ctx.write(&a.out, model.to_json().as_bytes())?;
    println!("train srcc: {}", fmt_vec(&report.train_srcc));
    if let Some(t) = &report.test_srcc {
        println!("test srcc: {}", fmt_vec(t));
    }
    if let Some(path) = &a.report {
        let mut text = serde_json::to_string_pretty(&report).map_err(CliError::invalid)?;
        text.push('\n');
        ctx.write(path, text.as_bytes())?;
    }
    Ok(())
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ")
}

fn eval_srcc_cmd(mut ctx: Ctx, a: EvalSrccArgs) -> Result<()> {
    let space = load_space(&mut ctx, &a.space)?;
    let model = load_model(&mut ctx, &a.model, Some(&space))?;
    let records = load_records(&mut ctx, &space, &a.data.data)?;
    let labels = metric_values(&records, &a.data.metric)?;
    let srcc = eval_srcc(&model, &encode(&model, &space, &records)?, &labels)?;
    println!("{}", fmt_vec(&srcc));
    if let Some(out) = &a.out {
        let file = SrccFile { metric: a.data.metric.clone(), srcc };
        ctx.config["metric"] = json!(a.data.metric);
        let mut text = serde_json::to_string_pretty(&file).map_err(CliError::invalid)?;
        text.push('\n');
        ctx.write(out, text.as_bytes())?;
    }
    Ok(())
}

fn stats(mut ctx: Ctx, a: StatsArgs) -> Result<()> {
    let space = load_space(&mut ctx, &a.space)?;
    let mut model = load_model(&mut ctx, &a.model, Some(&space))?;
    let records = load_records(&mut ctx, &space, &a.data.data)?;
    let labels = metric_values(&records, &a.data.metric)?;
    let archs: Vec<Architecture> = records.into_iter().map(|r| r.arch).collect();
    fit_statistics(&mut model, &space, &archs, &labels, a.floor)?;
    ctx.config["metric"] = json!(a.data.metric);
    ctx.config["floor"] = json!(a.floor);
    ctx.write(&a.out, model.to_json().as_bytes())?;
    Ok(())
}

fn write_table(ctx: &Ctx, space: &SearchSpace, table: &ScoreTable, out: &Path) -> Result<()> {
    let mut buf = Vec::new();
    table.write_csv(space, &mut buf)?;
    ctx.write(out, &buf)?;
    println!("scored {} subgraphs over {} stages", table.num_rows(), table.stages.len());
    Ok(())
}

fn score(mut ctx: Ctx, a: ScoreArgs) -> Result<()> {
    let space = load_space(&mut ctx, &a.space)?;
    let model = load_model(&mut ctx, &a.model, Some(&space))?;
    let mode = score_mode(a.mode);
    let table = build_score_table(&space, &[&model], None, mode, a.cap)?;
    ctx.config["mode"] = json!(mode.as_str());
    ctx.config["cap"] = json!(a.cap);
    write_table(&ctx, &space, &table, &a.out)
}

fn sig17(x: f64) -> String {
    format!("{x:.16e}")
}

fn feat_importance(mut ctx: Ctx, a: FeatArgs) -> Result<()> {
    let model = load_model(&mut ctx, &a.model, None)?;
    let imp = feature_importance(&model)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["category", "value", "magnitude", "category_range", "category_mean", "category_std"])
        .map_err(CliError::invalid)?;
    for cat in &imp {
        for (value, mag) in &cat.values {
            w.write_record([&cat.name, value, &sig17(*mag), &sig17(cat.range), &sig17(cat.mean), &sig17(cat.std)])
                .map_err(CliError::invalid)?;
        }
    }
    let buf = w.into_inner().map_err(CliError::invalid)?;
    ctx.write(&a.out, &buf)?;
    let mut ranked: Vec<_> = imp.iter().collect();
    ranked.sort_by(|x, y| y.range.total_cmp(&x.range));
    for cat in ranked {
        println!("{}: range {:.6} mean {:.6} std {:.6}", cat.name, cat.range, cat.mean, cat.std);
    }
    Ok(())
}

fn reduce(mut ctx: Ctx, a: ReduceArgs) -> Result<()> {
    let space = load_space(&mut ctx, &a.space)?;
    let table = load_table(&mut ctx, &space, &a.table)?;
    let selection = match a.selection {
        SelectionArg::Unconstrained => Selection::Unconstrained,
        SelectionArg::HopConstrained => Selection::HopConstrained,
    };
    let mut reduced = reduce_space(&table, &space, a.k, selection)?;
    reduced.provenance.tables.push(a.table.display().to_string());
    if let Some(t) = &a.target {
        reduced.provenance.targets.push(t.clone());
    }
    ctx.merge_config(json!({ "k": a.k, "selection": selection, "target": a.target }));
    ctx.write(&a.out, reduced.to_toml().as_bytes())?;
    println!("reduced space size: {}", reduced.size());
    Ok(())
}

fn union(mut ctx: Ctx, a: UnionArgs) -> Result<()> {
    let parts = a
        .inputs
        .iter()
        .map(|p| Ok(ReducedSpace::from_toml(&ctx.read(p)?)?))
        .collect::<Result<Vec<_>>>()?;
    let merged = union_spaces(&parts)?;
    ctx.write(&a.out, merged.to_toml().as_bytes())?;
    println!("union size: {}", merged.size());
    Ok(())
}

fn build(mut ctx: Ctx, a: BuildArgs) -> Result<()> {
    let space = load_space(&mut ctx, &a.space)?;
    let table = load_table(&mut ctx, &space, &a.table)?;
    let reduced = match &a.reduced {
        Some(p) => Some(load_reduced(&mut ctx, &space, p)?),
        None => None,
    };
    let built = build_top(&table, &space, a.n, reduced.as_ref())?;
    let records: Vec<Record> = built
        .iter()
        .map(|b| Record { arch: b.arch.clone(), metrics: BTreeMap::from([("build_score".to_string(), b.score)]) })
        .collect();
    ctx.merge_config(json!({ "n": a.n, "mode": table.mode.as_str() }));
    ctx.write(&a.out, &records_bytes(&space, &records)?)?;
    for (rank, b) in built.iter().enumerate() {
        let ids: Vec<String> = b.ids.iter().map(u64::to_string).collect();
        println!("{}\t{:.6}\t{}", rank + 1, b.score, ids.join(","));
    }
    Ok(())
}

fn enumerate(mut ctx: Ctx, a: EnumerateArgs) -> Result<()> {
    let space = load_space(&mut ctx, &a.space)?;
    let reduced = load_reduced(&mut ctx, &space, &a.reduced)?;
    let records = unlabeled(enumerate_reduced(&reduced, &space, a.cap)?);
    ctx.merge_config(json!({ "cap": a.cap }));
    ctx.write(&a.out, &records_bytes(&space, &records)?)?;
    println!("{} valid architectures", records.len());
    Ok(())
}

fn nas(mut ctx: Ctx, a: NasArgs) -> Result<()> {
    let oracle = load_oracle(&mut ctx, &a.oracle)?;
    let space = oracle.space();
    let reduced = match &a.reduced {
        Some(p) => Some(load_reduced(&mut ctx, space, p)?),
        None => None,
    };
    let mut cfg: SearchConfig = match &a.config {
        Some(path) => from_toml(&mut ctx, path)?,
        None => SearchConfig::default(),
    };
    cfg.initial_archs = a.initial_archs.unwrap_or(cfg.initial_archs);
    cfg.iters = a.iters.unwrap_or(cfg.iters);
    cfg.evals_per_iter = a.evals_per_iter.unwrap_or(cfg.evals_per_iter);
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    if let Some(m) = a.mutation {
        cfg.mutation = match m {
            MutationArg::StageSwap => Mutation::StageSwap,
            MutationArg::LayerEdit => Mutation::LayerEdit,
        };
    }
    cfg.validate()?;
    let def = oracle.def();
    let objectives = vec![def.metric.clone(), def.cost_metric.clone()];
    if cfg.directions.len() != objectives.len() {
        return Err(CliError::invalid(format!(
            "{} directions given for objectives {}",
            cfg.directions.len(),
            objectives.join(", ")
        )));
    }
    let dom = match &reduced {
        Some(r) => SearchDomain::reduced(space, r)?,
        None => SearchDomain::full(space),
    };
    let result = run_ea(
        &dom,
        |arch| {
            let m = oracle.evaluate(arch)?;
            Ok::<_, autobuild::bench::BenchError>(objectives.iter().map(|k| m[k]).collect())
        },
        &cfg,
    )?;

    ctx.seed = Some(cfg.seed);
    ctx.merge_config(json!({ "search": to_value(&cfg), "objectives": objectives }));
    let mut log = Vec::new();
    for entry in &result.log {
        serde_json::to_writer(&mut log, entry).map_err(CliError::invalid)?;
        log.push(b'\n');
    }
    ctx.write(&a.out, &log)?;
    let front = FrontFile::from_front(space, &result.front, objectives);
    let mut text = serde_json::to_string_pretty(&front).map_err(CliError::invalid)?;
    text.push('\n');
    ctx.write(&a.front, text.as_bytes())?;
    println!(
        "{} evaluations, {} on the front, {} duplicate draws",
        result.log.len(),
        result.front.len(),
        result.cache_hits
    );
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct EnsembleFile {
    format: String,
    version: u32,
    weights: EnsembleWeights,
    models: Vec<Value>,
}

fn ensemble_train(mut ctx: Ctx, a: EnsembleTrainArgs) -> Result<()> {
    let space = load_space(&mut ctx, &a.space)?;
    let cfg = predictor_config(&mut ctx, &a.predictor)?;
    let records = load_records(&mut ctx, &space, &a.data.data)?;
    let labels = metric_values(&records, &a.data.metric)?;
    let archs: Vec<Architecture> = records.into_iter().map(|r| r.arch).collect();
    if a.seeds.is_empty() {
        return Err(CliError::invalid("at least one seed is required"));
    }
    let ens = train_ensemble(&space, &archs, &labels, &a.seeds, a.folds, &cfg, a.floor)?;
    let models = ens
        .models
        .iter()
        .map(|m| serde_json::from_str(&m.to_json()).map_err(CliError::invalid))
        .collect::<Result<Vec<Value>>>()?;
    let file = EnsembleFile {
        format: ENSEMBLE_FORMAT.into(),
        version: ENSEMBLE_VERSION,
        weights: ens.weights.clone(),
        models,
    };
    ctx.config["metric"] = json!(a.data.metric);
    ctx.config["folds"] = json!(a.folds);
    ctx.config["seeds"] = json!(a.seeds);
    ctx.config["floor"] = json!(a.floor);
    let text = serde_json::to_string(&file).map_err(CliError::invalid)?;
    ctx.write(&a.out, text.as_bytes())?;
    for (h, row) in transpose(&ens.weights.weights).iter().enumerate() {
        println!("hop {h} weights: {}", fmt_vec(row));
    }
    Ok(())
}

fn transpose(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let cols = m.first().map_or(0, Vec::len);
    (0..cols).map(|c| m.iter().map(|r| r[c]).collect()).collect()
}

fn ensemble_score(mut ctx: Ctx, a: EnsembleScoreArgs) -> Result<()> {
    let space = load_space(&mut ctx, &a.space)?;
    let text = ctx.read(&a.ensemble)?;
    let file: EnsembleFile = serde_json::from_str(&text)
        .map_err(|e| CliError::invalid(format!("{}: {e}", a.ensemble.display())))?;
    if file.format != ENSEMBLE_FORMAT || file.version != ENSEMBLE_VERSION {
        return Err(CliError::invalid(format!(
            "unsupported ensemble file {} version {}",
            file.format, file.version
        )));
    }
    if file.models.len() != file.weights.weights.len() {
        return Err(CliError::invalid("ensemble weights do not match its members"));
    }
    let models = file
        .models
        .iter()
        .map(|v| Ok(PredictorModel::from_json(&v.to_string(), Some(space.schema()))?))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&PredictorModel> = models.iter().collect();
    let mode = score_mode(a.mode);
    let table = build_score_table(&space, &refs, Some(&file.weights), mode, a.cap)?;
    ctx.config["mode"] = json!(mode.as_str());
    ctx.config["cap"] = json!(a.cap);
    write_table(&ctx, &space, &table, &a.out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scientific_rendering() {
        assert_eq!(scientific("7371"), "7371");
        assert_eq!(scientific("21834010000000000000"), "2.183e19");
    }
}
