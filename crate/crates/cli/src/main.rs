//! `kgeval` command line front end.
//!
//! Every subcommand except `report` builds an experiment config from its
//! flags and runs it, so `kgeval run --config cfg.json` and the flag form
//! produce identical artifacts. Exit codes: 0 success, 1 validation error,
//! 2 runtime error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use kgeval::experiment::{OutputFormat, SweepGrid};
use kgeval::scorers::TranslationalParams;
use kgeval::{run_experiment, ExperimentConfig, MetricReport, RankVariant, ScorerSpec, SideHandling, Task};

#[derive(Parser)]
#[command(name = "kgeval", version, about = "Rank-based evaluation for link prediction and entity alignment")]
struct Cli {
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rank a JSONL score dump and report metrics.
    Rank(RankArgs),
    /// Evaluate a link prediction scorer on train/test triple files.
    EvalLp(EvalLpArgs),
    /// Evaluate an entity alignment scorer on an alignment file.
    EvalEa(EvalEaArgs),
    /// Sweep over training fractions, evaluation sizes and seeds.
    Sweep(SweepArgs),
    /// Correlate the degrees of aligned entities.
    AnalyzeDegrees(DegreeArgs),
    /// Convert a JSON report to CSV (or normalized JSON).
    Report(ReportArgs),
    /// Run an experiment described by a JSON config file.
    Run(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Optimistic,
    Pessimistic,
    Realistic,
}

impl From<VariantArg> for RankVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Optimistic => RankVariant::Optimistic,
            VariantArg::Pessimistic => RankVariant::Pessimistic,
            VariantArg::Realistic => RankVariant::Realistic,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SideArg {
    Pooled,
    Averaged,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => OutputFormat::Json,
            FormatArg::Csv => OutputFormat::Csv,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ScorerKind {
    Constant,
    Random,
    Oracle,
    NoisySimilarity,
    Translational,
}

#[derive(Args)]
struct OutputArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Output formats (comma separated).
    #[arg(long, value_enum, value_delimiter = ',', default_values = ["json", "csv"])]
    format: Vec<FormatArg>,
    /// Worker threads for evaluation; 0 uses all cores. Never changes results.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args)]
struct MetricArgs {
    #[arg(long, value_enum, default_value = "realistic")]
    variant: VariantArg,
    /// Cut-offs for Hits@k (comma separated).
    #[arg(long, value_delimiter = ',', default_values = ["1", "3", "10"])]
    ks: Vec<u64>,
}

#[derive(Args)]
struct ScorerArgs {
    #[arg(long, value_enum)]
    scorer: ScorerKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Observation noise of the noisy-similarity scorer.
    #[arg(long)]
    sigma: Option<f64>,
    /// Vector dimension (noisy-similarity: 16, translational: 32 by default).
    #[arg(long)]
    dimension: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Negative samples per training triple.
    #[arg(long)]
    negatives: Option<usize>,
    /// Redraw negative samples that are training triples.
    #[arg(long)]
    filter_negatives: bool,
}

impl ScorerArgs {
    fn spec(&self) -> anyhow::Result<ScorerSpec> {
        Ok(match self.scorer {
            ScorerKind::Constant => ScorerSpec::Constant,
            ScorerKind::Random => ScorerSpec::Random { seed: self.seed },
            ScorerKind::Oracle => ScorerSpec::Oracle,
            ScorerKind::NoisySimilarity => ScorerSpec::NoisySimilarity {
                seed: self.seed,
                sigma: self
                    .sigma
                    .ok_or_else(|| kgeval::Error::InvalidConfig("--sigma is required for noisy-similarity".into()))?,
                dimension: self.dimension.unwrap_or(16),
            },
            ScorerKind::Translational => {
                let d = TranslationalParams::default();
                ScorerSpec::Translational(TranslationalParams {
                    seed: self.seed,
                    dimension: self.dimension.unwrap_or(d.dimension),
                    margin: self.margin.unwrap_or(d.margin),
                    learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
                    epochs: self.epochs.unwrap_or(d.epochs),
                    negatives: self.negatives.unwrap_or(d.negatives),
                    filter_negatives: self.filter_negatives,
                })
            }
        })
    }
}

#[derive(Args)]
struct RankArgs {
    /// JSONL score dump: {"id", "scores", "true_index", "mask"?} per line.
    #[arg(long)]
    scores: PathBuf,
    #[command(flatten)]
    metrics: MetricArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct EvalLpArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    valid: Option<PathBuf>,
    /// Remove other known-true completions from the candidates (default).
    #[arg(long, overrides_with = "unfiltered")]
    filtered: bool,
    /// Keep every entity as a candidate.
    #[arg(long, overrides_with = "filtered")]
    unfiltered: bool,
    #[arg(long, value_enum, default_value = "pooled")]
    side: SideArg,
    #[command(flatten)]
    scorer: ScorerArgs,
    #[command(flatten)]
    metrics: MetricArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct AlignmentInputs {
    /// Two-column TSV of aligned labels.
    #[arg(long)]
    alignment: PathBuf,
    /// Left graph; entity vocabulary is taken from it when given.
    #[arg(long, requires = "kg_right")]
    kg_left: Option<PathBuf>,
    #[arg(long, requires = "kg_left")]
    kg_right: Option<PathBuf>,
}

#[derive(Args)]
struct EvalEaArgs {
    #[command(flatten)]
    inputs: AlignmentInputs,
    /// Training pairs, known to the scorer but not evaluated.
    #[arg(long)]
    alignment_train: Option<PathBuf>,
    #[command(flatten)]
    scorer: ScorerArgs,
    #[command(flatten)]
    metrics: MetricArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    inputs: AlignmentInputs,
    #[arg(long, value_delimiter = ',', required = true)]
    train_fractions: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    eval_sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    seeds: Vec<u64>,
    #[command(flatten)]
    scorer: ScorerArgs,
    #[command(flatten)]
    metrics: MetricArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct DegreeArgs {
    #[arg(long)]
    kg_left: PathBuf,
    #[arg(long)]
    kg_right: PathBuf,
    #[arg(long)]
    alignment: PathBuf,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ReportArgs {
    /// A report.json written by this tool.
    input: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override the configured thread count.
    #[arg(long)]
    threads: Option<usize>,
    /// Override the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn base_config(task: Task, output: &OutputArgs) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(task, output.out.clone());
    cfg.threads = output.threads;
    let mut formats: Vec<OutputFormat> = output.format.iter().copied().map(Into::into).collect();
    formats.sort();
    formats.dedup();
    cfg.formats = formats;
    cfg
}

fn apply_metrics(cfg: &mut ExperimentConfig, m: &MetricArgs) {
    cfg.variant = m.variant.into();
    cfg.ks = m.ks.clone();
}

fn apply_alignment(cfg: &mut ExperimentConfig, inputs: &AlignmentInputs) {
    cfg.alignment = Some(inputs.alignment.clone());
    cfg.kg_left = inputs.kg_left.clone();
    cfg.kg_right = inputs.kg_right.clone();
}

fn config_for(command: Command) -> anyhow::Result<Option<ExperimentConfig>> {
    let cfg = match command {
        Command::Rank(a) => {
            let mut cfg = base_config(Task::Rank, &a.output);
            cfg.scores = Some(a.scores);
            apply_metrics(&mut cfg, &a.metrics);
            cfg
        }
        Command::EvalLp(a) => {
            let mut cfg = base_config(Task::Lp, &a.output);
            cfg.train = Some(a.train);
            cfg.test = Some(a.test);
            cfg.valid = a.valid;
            cfg.filtered = a.filtered || !a.unfiltered;
            cfg.side = match a.side {
                SideArg::Pooled => SideHandling::Pooled,
                SideArg::Averaged => SideHandling::Averaged,
            };
            cfg.scorer = Some(a.scorer.spec()?);
            apply_metrics(&mut cfg, &a.metrics);
            cfg
        }
        Command::EvalEa(a) => {
            let mut cfg = base_config(Task::Ea, &a.output);
            apply_alignment(&mut cfg, &a.inputs);
            cfg.alignment_train = a.alignment_train;
            cfg.scorer = Some(a.scorer.spec()?);
            apply_metrics(&mut cfg, &a.metrics);
            cfg
        }
        Command::Sweep(a) => {
            let mut cfg = base_config(Task::Sweep, &a.output);
            apply_alignment(&mut cfg, &a.inputs);
            cfg.sweep = Some(SweepGrid {
                train_fractions: a.train_fractions,
                eval_sizes: a.eval_sizes,
                seeds: a.seeds,
            });
            cfg.scorer = Some(a.scorer.spec()?);
            apply_metrics(&mut cfg, &a.metrics);
            cfg
        }
        Command::AnalyzeDegrees(a) => {
            let mut cfg = base_config(Task::Degrees, &a.output);
            cfg.kg_left = Some(a.kg_left);
            cfg.kg_right = Some(a.kg_right);
            cfg.alignment = Some(a.alignment);
            cfg
        }
        Command::Run(a) => {
            let mut cfg = ExperimentConfig::load(&a.config)?;
            if let Some(t) = a.threads {
                cfg.threads = t;
            }
            if let Some(o) = a.out {
                cfg.out = o;
            }
            cfg
        }
        Command::Report(a) => {
            convert_report(&a.input, a.format, a.out.as_deref())?;
            return Ok(None);
        }
    };
    Ok(Some(cfg))
}

fn convert_report(input: &Path, format: FormatArg, out: Option<&Path>) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let report = MetricReport::from_json(&text)?;
    let converted = match format {
        FormatArg::Csv => report.to_csv(),
        FormatArg::Json => report.to_json(),
    };
    match out {
        Some(p) => std::fs::write(p, converted).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{converted}"),
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let Some(cfg) = config_for(cli.command)? else {
        return Ok(());
    };
    let output = run_experiment(&cfg)?;
    for p in &output.written {
        log::info!("wrote {}", p.display());
    }
    if let Some(report) = &output.report {
        print!("{}", report.to_json());
    }
    Ok(())
}

/// Validation problems exit with 1, everything else with 2.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<kgeval::Error>() {
        Some(e) if e.is_validation() => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

