use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, Subcommand};
use gradvar_bench::problems::parse_problem_list;
use gradvar_bench::{BenchConfig, PipelineOutput, Problem};

/// Gradient-based uncertainty estimators checked against HMC references.
#[derive(Debug, Parser)]
#[command(name = "gradvar", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output directory (created if absent).
    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,

    /// Base seed for every derived stream.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Configuration override `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Comma-separated problem list.
    #[arg(long, global = true, value_name = "A,B,...")]
    problems: Option<String>,

    /// Only log errors.
    #[arg(long, global = true, conflicts_with = "debug")]
    quiet: bool,

    /// Log debug detail.
    #[arg(long, global = true)]
    debug: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
enum Command {
    /// Classification estimators vs HMC (Pearson/Spearman).
    Validate,
    /// Regression estimators vs HMC and Fisher spectrum.
    Regress,
    /// Estimator agreement across model sizes on binary rings.
    Scaling,
    /// Half-split Fisher bias maps and statistics.
    ProxyBias,
    /// Normalized uncertainty maps as PGM and CSV.
    Map,
    /// Sampler calibration on a 2D standard normal.
    HmcCheck,
}

impl Command {
    fn accepts_problems(self) -> bool {
        matches!(self, Command::Validate | Command::ProxyBias | Command::Map)
    }
}

fn usage_error(kind: ErrorKind, msg: impl std::fmt::Display) -> ! {
    Cli::command().error(kind, msg).exit()
}

fn build_config(cli: &Cli) -> BenchConfig {
    let mut cfg = BenchConfig::default();
    for kv in &cli.overrides {
        if let Err(e) = cfg.apply_override(kv) {
            usage_error(ErrorKind::InvalidValue, e);
        }
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg
}

fn problems(cli: &Cli, default: &[Problem]) -> Vec<Problem> {
    match &cli.problems {
        None => default.to_vec(),
        Some(s) => parse_problem_list(s).unwrap_or_else(|e| usage_error(ErrorKind::InvalidValue, e)),
    }
}

fn run(cli: &Cli, cfg: &BenchConfig) -> Result<bool> {
    let out = match cli.command {
        Command::Validate => PipelineOutput {
            report: gradvar_bench::run_validation_classification(&problems(cli, &Problem::CLASSIFICATION), cfg)?,
            maps: Vec::new(),
        },
        Command::Regress => PipelineOutput { report: gradvar_bench::run_validation_regression(cfg)?, maps: Vec::new() },
        Command::Scaling => {
            PipelineOutput { report: gradvar_bench::run_scaling(&gradvar_bench::scaling_ladder(cfg), cfg)?, maps: Vec::new() }
        }
        Command::ProxyBias => gradvar_bench::run_proxy_bias(&problems(cli, &Problem::PROXY), cfg)?,
        Command::Map => gradvar_bench::run_maps(&problems(cli, &Problem::CLASSIFICATION), cfg)?,
        Command::HmcCheck => {
            let (cal, report) = gradvar_bench::hmc_calibration(cfg)?;
            println!(
                "{}: max |mean error| {:.4} (< {}), max |cov error| {:.4} (< {}), accept {:.3} (in [{}, {}]), {} draws",
                if cal.passed() { "PASS" } else { "FAIL" },
                cal.mean_error,
                gradvar_bench::Calibration::MEAN_TOL,
                cal.cov_error,
                gradvar_bench::Calibration::COV_TOL,
                cal.accept_rate,
                gradvar_bench::Calibration::ACCEPT_RANGE.0,
                gradvar_bench::Calibration::ACCEPT_RANGE.1,
                cal.draws
            );
            PipelineOutput { report, maps: Vec::new() }
        }
    };
    gradvar_bench::write_output(&cli.out, &out).with_context(|| format!("writing results to {}", cli.out.display()))?;
    for row in out.report.errors() {
        log::error!("{} {}: {}", row.problem, row.model, row.value_text());
    }
    log::info!("wrote {} rows and {} maps to {}", out.report.rows.len(), out.maps.len(), cli.out.display());
    Ok(!out.report.has_errors())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet {
        log::LevelFilter::Error
    } else if cli.debug {
        log::LevelFilter::Debug
    } else {
        log::LevelFilter::Info
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    if cli.problems.is_some() && !cli.command.accepts_problems() {
        usage_error(ErrorKind::ArgumentConflict, "--problems is not accepted by this command");
    }
    let cfg = build_config(&cli);
    match run(&cli, &cfg) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
