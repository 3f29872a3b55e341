use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use snse::harness::{error_record, run_cli, ExperimentKind, Overrides, EXIT_CONFIG};
use snse::Error;

#[derive(Parser)]
#[command(name = "snse", version, about = "Stochastic Navier-Stokes verification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// JSON config file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for config.json, report.csv and report.ndjson.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Direct Stratonovich solve against the transformed solution v Q.
    TransformCheck(RunArgs),
    /// Energy and V-norm estimates along sampled paths.
    EnergyAudit(RunArgs),
    /// Malliavin and Fréchet derivatives against finite differences.
    MalliavinCheck(RunArgs),
    /// Residuals of the anticipating equation for a random initial field.
    AnticipatingCheck(RunArgs),
    /// Strong convergence of the transform gap under refinement.
    Convergence(RunArgs),
    /// Sampled ratios of the trilinear form against its estimates.
    BAudit(RunArgs),
    /// Path ensemble statistics.
    Ensemble(RunArgs),
}

fn init_workers() -> Result<(), Error> {
    let Ok(v) = std::env::var("SNSE_WORKERS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::Config(format!("SNSE_WORKERS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Err(e) = init_workers() {
        eprintln!("{}", error_record(&e));
        return ExitCode::from(EXIT_CONFIG as u8);
    }
    let (kind, args) = match cli.command {
        Command::TransformCheck(a) => (ExperimentKind::TransformCheck, a),
        Command::EnergyAudit(a) => (ExperimentKind::EnergyAudit, a),
        Command::MalliavinCheck(a) => (ExperimentKind::MalliavinCheck, a),
        Command::AnticipatingCheck(a) => (ExperimentKind::AnticipatingCheck, a),
        Command::Convergence(a) => (ExperimentKind::Convergence, a),
        Command::BAudit(a) => (ExperimentKind::BAudit, a),
        Command::Ensemble(a) => (ExperimentKind::Ensemble, a),
    };
    let ov = Overrides {
        seed: args.seed,
        out: args.out,
    };
    ExitCode::from(run_cli(kind, &args.config, &ov) as u8)
}
