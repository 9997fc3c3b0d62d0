//! `ranperf`: attribute RAN throughput changes to code changes.
//!
//! Exit codes: 0 success, 1 data error, 2 configuration or usage error,
//! 3 `analyze` found a degraded commit.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::PipelineConfig;

#[derive(Debug, Parser)]
#[command(name = "ranperf", version, about = "Commit-aware throughput regression analysis for RAN test campaigns")]
struct Cli {
    /// Pipeline configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for feature-store files and reports.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Repeat for more log output on stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a dataset tree into test records (appended to tests.jsonl).
    Ingest(IngestArgs),
    /// Categorize commits into layer/component features (appended to commit_features.jsonl).
    Categorize(CategorizeArgs),
    /// Join test records with commit features by revision hash.
    Assemble(AssembleArgs),
    /// Variance share of channel, load and code factor bundles.
    Decompose(AnalysisInput),
    /// Train the environment baseline and cross-fit expected efficiency.
    TrainBaseline(SeededInput),
    /// Label residuals, attribute layers, roll up commits and compare with the temporal baseline.
    Analyze(AnalyzeArgs),
    /// Train the degradation-risk classifier.
    TrainRisk(TrainRiskArgs),
    /// Score tests with a trained risk model.
    Score(ScoreArgs),
    /// Generate a synthetic campaign with ground truth.
    Synth(SynthArgs),
    /// Summarize the reports in the output directory.
    Report,
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Dataset root holding yyyymmdd/hhmmss test directories.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// gNB log parse rules (defaults to the shipped rules).
    #[arg(long)]
    parse_rules: Option<PathBuf>,
    /// Target rate in Mbps for traffic files without an `<N>mbps` tag.
    #[arg(long)]
    default_target_rate: Option<f64>,
}

#[derive(Debug, Args)]
struct CategorizeArgs {
    /// Commit metadata, one JSON object per line.
    #[arg(long)]
    commits: PathBuf,
    /// Keyword rule file (defaults to the shipped rules).
    #[arg(long)]
    keyword_rules: Option<PathBuf>,
    /// Refinement service: `stub`, `none` or an http(s) endpoint.
    #[arg(long)]
    refine: Option<String>,
}

#[derive(Debug, Args)]
struct AssembleArgs {
    #[arg(long)]
    tests: Option<PathBuf>,
    #[arg(long)]
    commit_features: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AnalysisInput {
    /// Assembled rows (defaults to <out-dir>/analysis.jsonl).
    #[arg(long)]
    analysis: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SeededInput {
    #[command(flatten)]
    input: AnalysisInput,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    input: AnalysisInput,
    /// Cross-fitted expected efficiency (defaults to <out-dir>/expected_efficiency.csv).
    #[arg(long)]
    expected: Option<PathBuf>,
    #[arg(long)]
    tau_rho: Option<f64>,
    #[arg(long)]
    tau_exp: Option<f64>,
    /// Degraded tests needed for a degraded commit verdict.
    #[arg(long)]
    min_degraded: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainRiskArgs {
    #[command(flatten)]
    input: SeededInput,
    /// Residual labels (defaults to <out-dir>/labels.jsonl).
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[command(flatten)]
    input: AnalysisInput,
    /// Risk model (defaults to <out-dir>/risk_model.jsonl).
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Scenario file (TOML); built-in defaults when absent.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            });
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();

    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}

fn run(cli: Cli) -> ranperf_core::Result<u8> {
    let cfg = PipelineConfig::load(cli.config.as_deref())?;
    let out = cfg.out_dir(cli.out_dir.as_deref());
    std::fs::create_dir_all(&out).map_err(|e| ranperf_core::Error::io(&out, e))?;
    let ctx = commands::Context { cfg, out };
    match cli.command {
        Command::Ingest(a) => ctx.ingest(a.dataset, a.parse_rules, a.default_target_rate),
        Command::Categorize(a) => ctx.categorize(&a.commits, a.keyword_rules, a.refine),
        Command::Assemble(a) => ctx.assemble(a.tests, a.commit_features),
        Command::Decompose(a) => ctx.decompose(a.analysis),
        Command::TrainBaseline(a) => ctx.train_baseline(a.input.analysis, a.seed),
        Command::Analyze(a) => ctx.analyze(a.input.analysis, a.expected, a.tau_rho, a.tau_exp, a.min_degraded),
        Command::TrainRisk(a) => ctx.train_risk(a.input.input.analysis, a.labels, a.input.seed),
        Command::Score(a) => ctx.score(a.input.analysis, a.model, a.threshold),
        Command::Synth(a) => ctx.synth(a.scenario, a.seed),
        Command::Report => ctx.report(),
    }
}
