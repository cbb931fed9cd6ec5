//! Command-line front end for the driving-behavior indicator pipeline.
//!
//! Exit codes: 0 success, 2 configuration error, 3 missing or stale
//! upstream artifact, 4 data error.

mod commands;
mod config;
mod manifest;
mod plots;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::RunConfig;
use lanemetrics::stats::AggregationMode;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Upstream(String),
    Data(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Upstream(_) => 3,
            CliError::Data(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Upstream(m) | CliError::Data(m) => m,
        }
    }
}

/// Resolved run context shared by all commands.
pub struct Ctx {
    pub cfg: RunConfig,
    pub config_dir: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub agg: Vec<AggregationMode>,
    pub plots: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AggArg {
    Mean,
    Median,
    Both,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Run configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Random seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Emit SVG plots alongside the tables.
    #[arg(long)]
    plots: bool,
    /// Per-subject aggregation across curves.
    #[arg(long, value_enum)]
    agg: Option<AggArg>,
    /// Worker-pool size (defaults to the number of CPUs).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Parser)]
#[command(
    name = "lanemetrics",
    version,
    about = "Objective driving-behavior indicators, questionnaire scoring, and their correlation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load, filter, and resample subject traces.
    Ingest(CommonArgs),
    /// Select curves of interest and compute the center band.
    Curves(CommonArgs),
    /// Per-curve kinematic statistics aggregated per subject.
    Indicators(CommonArgs),
    /// Acceleration envelopes and their component decomposition.
    Envelope(CommonArgs),
    /// Stationary cornering gradient per subject.
    Ccg(CommonArgs),
    /// Transient trajectory classification and intensity.
    Trajectories(CommonArgs),
    /// Questionnaire factor scores and reliability.
    Mdsi(CommonArgs),
    /// Partial correlations of factor scores against all indicators.
    Correlate(CommonArgs),
    /// Collated summary document.
    Report(CommonArgs),
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Command::Ingest(a)
            | Command::Curves(a)
            | Command::Indicators(a)
            | Command::Envelope(a)
            | Command::Ccg(a)
            | Command::Trajectories(a)
            | Command::Mdsi(a)
            | Command::Correlate(a)
            | Command::Report(a) => a,
        }
    }
}

fn build_ctx(args: &CommonArgs) -> Result<Ctx, CliError> {
    let (cfg, config_dir) = RunConfig::load(&args.config)?;
    let agg_str = match args.agg {
        Some(AggArg::Mean) => "mean".to_string(),
        Some(AggArg::Median) => "median".to_string(),
        Some(AggArg::Both) => "both".to_string(),
        None => cfg.agg.clone(),
    };
    let agg = match agg_str.as_str() {
        "mean" => vec![AggregationMode::Mean],
        "median" => vec![AggregationMode::Median],
        "both" => vec![AggregationMode::Mean, AggregationMode::Median],
        other => {
            return Err(CliError::Config(format!(
                "unknown aggregation mode `{other}` (use mean, median, or both)"
            )))
        }
    };
    let out_dir = args
        .out
        .clone()
        .unwrap_or_else(|| config_dir.join(&cfg.out_dir));
    // every command validates the dataset schema up front so configuration
    // problems surface before any output is written
    let schema_path = cfg.schema_path(&config_dir);
    if !schema_path.is_file() {
        return Err(CliError::Config(format!(
            "schema file not found: {}",
            schema_path.display()
        )));
    }
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", out_dir.display())))?;
    Ok(Ctx {
        seed: args.seed.unwrap_or(cfg.seed),
        cfg,
        config_dir,
        out_dir,
        agg,
        plots: args.plots,
    })
}

fn run(command: &Command) -> Result<(), CliError> {
    let args = command.common();
    let ctx = build_ctx(args)?;
    let workers = args.workers.unwrap_or_else(|| {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    });
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    pool.install(|| match command {
        Command::Ingest(_) => commands::cmd_ingest(&ctx),
        Command::Curves(_) => commands::cmd_curves(&ctx),
        Command::Indicators(_) => commands::cmd_indicators(&ctx),
        Command::Envelope(_) => commands::cmd_envelope(&ctx),
        Command::Ccg(_) => commands::cmd_ccg(&ctx),
        Command::Trajectories(_) => commands::cmd_trajectories(&ctx),
        Command::Mdsi(_) => commands::cmd_mdsi(&ctx),
        Command::Correlate(_) => commands::cmd_correlate(&ctx),
        Command::Report(_) => commands::cmd_report(&ctx),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.exit_code())
        }
    }
}
