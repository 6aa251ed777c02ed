use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "autobuild", version, about = "Score, reduce and build macro search spaces with magnitude-ranked graph predictors")]
pub struct Cli {
    /// Directory for relative output paths.
    #[arg(long, global = true, env = "AUTOBUILD_OUT_DIR", value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write or count search spaces.
    #[command(subcommand)]
    Space(SpaceCmd),
    /// Write a synthetic oracle definition.
    #[command(subcommand)]
    Oracle(OracleCmd),
    /// Sample random architectures into an unlabeled dataset.
    Sample(SampleArgs),
    /// Label architectures with an oracle and derived targets.
    Label(LabelArgs),
    /// Train a predictor.
    Train(TrainArgs),
    /// Spearman correlation of each hop norm and of the prediction with a metric.
    EvalSrcc(EvalSrccArgs),
    /// Store hop-norm and label statistics in a checkpoint.
    Stats(StatsArgs),
    /// Score every module subgraph of a space.
    Score(ScoreArgs),
    /// Per-choice magnitudes of the feature networks.
    FeatImportance(FeatArgs),
    /// Keep the top-K subgraphs of each stage.
    Reduce(ReduceArgs),
    /// Per-stage union of reduced spaces.
    Union(UnionArgs),
    /// Assemble the best-scoring architectures.
    Build(BuildArgs),
    /// List every valid architecture of a reduced space.
    Enumerate(EnumerateArgs),
    /// Multi-objective evolutionary search against an oracle.
    Nas(NasArgs),
    /// Cross-validated predictor ensembles.
    #[command(subcommand)]
    Ensemble(EnsembleCmd),
    /// Render a front, a score table or an SRCC vector.
    Report(ReportArgs),
}

/// A search space given as a file or a built-in preset.
#[derive(Args, Debug, Clone)]
pub struct SpaceSource {
    /// Space definition file (TOML).
    #[arg(long, value_name = "FILE", conflicts_with = "preset")]
    pub spec: Option<PathBuf>,
    /// Built-in space: mbv3, pn, pn-merged, unet-like or toy.
    #[arg(long, value_name = "NAME")]
    pub preset: Option<String>,
}

#[derive(Subcommand, Debug)]
pub enum SpaceCmd {
    /// Write a preset space definition.
    Gen {
        #[arg(long, value_name = "NAME")]
        preset: String,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Print per-stage subgraph counts and the total space size.
    Count {
        #[command(flatten)]
        space: SpaceSource,
    },
}

#[derive(Subcommand, Debug)]
pub enum OracleCmd {
    /// Write an oracle preset: mbv3-like, pn-like, toy or unet-like.
    Gen {
        #[arg(long, value_name = "NAME")]
        preset: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Noise std as a fraction of the contribution scale.
        #[arg(long)]
        noise: Option<f64>,
        /// Interaction std as a fraction of the contribution scale.
        #[arg(long)]
        interaction: Option<f64>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum SamplingArg {
    UniformSubgraph,
    UniformDepth,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[command(flatten)]
    pub space: SpaceSource,
    #[arg(long, short)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = SamplingArg::UniformSubgraph)]
    pub mode: SamplingArg,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct LabelArgs {
    /// Oracle definition file (TOML).
    #[arg(long, value_name = "FILE")]
    pub oracle: PathBuf,
    /// Dataset whose architectures are labeled; existing metrics are replaced.
    #[arg(long, value_name = "FILE")]
    pub archs: PathBuf,
    /// Derived metric `name=expr`, e.g. `score=100^(acc/100)/log10(lat)`; repeatable.
    #[arg(long = "target", value_name = "NAME=EXPR")]
    pub targets: Vec<String>,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum LossArg {
    Ranked,
    MseOnly,
    MaeRank,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum AggregationArg {
    Mean,
    Sum,
}

/// Predictor hyperparameters; unset flags fall back to `--config`, then to defaults.
#[derive(Args, Debug, Clone, Default)]
pub struct PredictorFlags {
    /// Predictor config file (TOML).
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub hops: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long, value_enum)]
    pub aggregation: Option<AggregationArg>,
    #[arg(long, value_enum)]
    pub loss: Option<LossArg>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub rank_eps: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct DataSource {
    /// Labeled dataset (JSONL).
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    /// Metric used as the label.
    #[arg(long, default_value = "acc")]
    pub metric: String,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub space: SpaceSource,
    #[command(flatten)]
    pub data: DataSource,
    /// Held-out dataset reported after training.
    #[arg(long, value_name = "FILE")]
    pub test_data: Option<PathBuf>,
    #[command(flatten)]
    pub predictor: PredictorFlags,
    /// Training report (JSON).
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
    /// Checkpoint (JSON).
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalSrccArgs {
    #[command(flatten)]
    pub space: SpaceSource,
    #[command(flatten)]
    pub data: DataSource,
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// SRCC vector (JSON); printed to stdout either way.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[command(flatten)]
    pub space: SpaceSource,
    #[command(flatten)]
    pub data: DataSource,
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Minimum labels behind a usable (stage, layers) entry.
    #[arg(long, default_value_t = autobuild::scorer::DEFAULT_COUNT_FLOOR)]
    pub floor: usize,
    /// Checkpoint with statistics; may equal `--model`.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum ModeArg {
    Raw,
    Shifted,
    Zscore,
    ZscoreEnum,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub space: SpaceSource,
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Raw)]
    pub mode: ModeArg,
    /// Largest number of subgraphs enumerated per stage.
    #[arg(long, default_value_t = 1_000_000)]
    pub cap: u64,
    /// Score table (CSV).
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct FeatArgs {
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Importance table (CSV).
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum SelectionArg {
    Unconstrained,
    HopConstrained,
}

#[derive(Args, Debug)]
pub struct ReduceArgs {
    #[command(flatten)]
    pub space: SpaceSource,
    #[arg(long, value_name = "FILE")]
    pub table: PathBuf,
    #[arg(long, short)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = SelectionArg::Unconstrained)]
    pub selection: SelectionArg,
    /// Name of the target the table was scored for, kept as provenance.
    #[arg(long)]
    pub target: Option<String>,
    /// Reduced space (TOML).
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct UnionArgs {
    #[arg(required = true, value_name = "FILE")]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    #[command(flatten)]
    pub space: SpaceSource,
    #[arg(long, value_name = "FILE")]
    pub table: PathBuf,
    #[arg(long, short, default_value_t = 1)]
    pub n: usize,
    /// Only combine subgraphs retained by this reduced space.
    #[arg(long, value_name = "FILE")]
    pub reduced: Option<PathBuf>,
    /// Architecture list (JSONL).
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EnumerateArgs {
    #[command(flatten)]
    pub space: SpaceSource,
    #[arg(long, value_name = "FILE")]
    pub reduced: PathBuf,
    #[arg(long, default_value_t = autobuild::builder::DEFAULT_REDUCED_CAP)]
    pub cap: u64,
    /// Dataset of unlabeled architectures (JSONL).
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum MutationArg {
    StageSwap,
    LayerEdit,
}

#[derive(Args, Debug)]
pub struct NasArgs {
    #[arg(long, value_name = "FILE")]
    pub oracle: PathBuf,
    /// Search only within this reduced space.
    #[arg(long, value_name = "FILE")]
    pub reduced: Option<PathBuf>,
    /// Search config file (TOML).
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub initial_archs: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub evals_per_iter: Option<usize>,
    #[arg(long, value_enum)]
    pub mutation: Option<MutationArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Search log (JSONL).
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Final Pareto front (JSON).
    #[arg(long, value_name = "FILE")]
    pub front: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum EnsembleCmd {
    /// Train folds x seeds predictors weighted by held-out SRCC.
    Train(EnsembleTrainArgs),
    /// Score every module subgraph with an ensemble.
    Score(EnsembleScoreArgs),
}

#[derive(Args, Debug)]
pub struct EnsembleTrainArgs {
    #[command(flatten)]
    pub space: SpaceSource,
    #[command(flatten)]
    pub data: DataSource,
    #[command(flatten)]
    pub predictor: PredictorFlags,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Comma-separated split seeds.
    #[arg(long, value_delimiter = ',', default_values_t = [0u64, 1, 2, 3])]
    pub seeds: Vec<u64>,
    #[arg(long, default_value_t = autobuild::scorer::DEFAULT_COUNT_FLOOR)]
    pub floor: usize,
    /// Ensemble (JSON).
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EnsembleScoreArgs {
    #[command(flatten)]
    pub space: SpaceSource,
    #[arg(long, value_name = "FILE")]
    pub ensemble: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Raw)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 1_000_000)]
    pub cap: u64,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportKind {
    /// Pareto front written by `nas --front`.
    Front,
    /// Score table written by `score`.
    Table,
    /// SRCC vector written by `eval-srcc --out`.
    Srcc,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Svg,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[arg(value_enum)]
    pub kind: ReportKind,
    #[arg(value_enum)]
    pub format: ReportFormat,
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    /// Space of the score table; required for `table`.
    #[command(flatten)]
    pub space: SpaceSource,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}
