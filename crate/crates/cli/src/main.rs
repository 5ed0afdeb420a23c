use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use disagg_cli::{cfg_seed, commands, config::PipelineConfig, RunStatus};

/// Estimates a quarterly series from an annual benchmark and related
/// quarterly indicators: cointegrating regression, quarterly
/// interpolation, and state-space benchmarking.
#[derive(Parser)]
#[command(name = "disagg", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optimizer seed; overrides the config's `optimizer.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Annual cointegrating regression and residual unit-root tests.
    Cointegrate(CommonArgs),
    /// Quarterly interpolation of the fitted relation (the dirty series).
    Interpolate(CommonArgs),
    /// State-space benchmarking of the dirty series against the annual
    /// totals.
    Benchmark(CommonArgs),
    /// All three stages in sequence.
    Pipeline(CommonArgs),
}

fn run(
    args: &CommonArgs,
    f: impl FnOnce(&PipelineConfig, &std::path::Path, u64) -> anyhow::Result<RunStatus>,
) -> ExitCode {
    let cfg = match PipelineConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    let out = args.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    let seed = cfg_seed(&cfg, args.seed);
    match f(&cfg, &out, seed) {
        Ok(RunStatus::Success) => ExitCode::from(0),
        Ok(RunStatus::Warnings) => {
            eprintln!("finished with warnings (see fit_report.txt)");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Cointegrate(args) => run(args, |c, o, _| commands::cmd_cointegrate(c, o)),
        Command::Interpolate(args) => run(args, |c, o, _| commands::cmd_interpolate(c, o)),
        Command::Benchmark(args) => run(args, commands::cmd_benchmark),
        Command::Pipeline(args) => run(args, commands::cmd_pipeline),
    }
}
