//! Config-driven experiment runner behind the `snse` binary.

pub mod config;
pub mod experiments;
pub mod report;

use std::path::{Path, PathBuf};

use serde_json::json;

pub use config::{ExperimentConfig, ExperimentKind, ResolvedConfig, CONFIG_SCHEMA};
pub use experiments::run_experiment;
pub use report::{ExperimentReport, PathFailure, MAX_FAILURE_FRACTION};

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

pub const DEFAULT_OUTPUT_DIR: &str = "snse-out";

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// Loads and resolves the config, runs the experiment and writes its reports.
/// Returns the resolved output directory with the report.
pub fn run_from_file(kind: ExperimentKind, path: &Path, ov: &Overrides) -> crate::Result<(PathBuf, ExperimentReport)> {
    let raw = ExperimentConfig::load(path)?;
    let out = ov
        .out
        .clone()
        .or_else(|| raw.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
    let mut cfg = raw.resolve(kind)?;
    if let Some(s) = ov.seed {
        cfg.seed = s;
    }
    let report = run_experiment(&cfg)?;
    report.write_to(&out)?;
    Ok((out, report))
}

/// Exit code for an error that stopped the run before reports were written.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Instability { .. } => EXIT_NUMERICAL,
        _ => EXIT_CONFIG,
    }
}

/// One-line machine-readable error record.
pub fn error_record(err: &Error) -> String {
    let kind = match err {
        Error::Config(_) | Error::DegenerateNoise | Error::InvalidBasis(_) | Error::InvalidField(_) => "config",
        Error::Io(_) => "io",
        Error::Instability { .. } => "numerical",
        _ => "invalid-input",
    };
    json!({"record": "error", "kind": kind, "message": err.to_string()}).to_string()
}

/// Runs and maps the outcome to an exit code, printing error records to
/// stderr and a one-line summary to stdout.
pub fn run_cli(kind: ExperimentKind, config: &Path, ov: &Overrides) -> i32 {
    match run_from_file(kind, config, ov) {
        Ok((out, rep)) => {
            if rep.n_attempted() == 0 {
                println!("{}: done, reports in {}", kind.name(), out.display());
            } else {
                println!(
                    "{}: {} of {} paths ok, reports in {}",
                    kind.name(),
                    rep.n_attempted() - rep.failures.len(),
                    rep.n_attempted(),
                    out.display()
                );
            }
            if rep.exceeds_failure_policy() {
                eprintln!(
                    "{}",
                    json!({
                        "record": "error",
                        "kind": "numerical",
                        "message": format!(
                            "{} of {} paths failed, above the {} tolerance",
                            rep.failures.len(),
                            rep.n_attempted(),
                            MAX_FAILURE_FRACTION
                        ),
                    })
                );
                EXIT_NUMERICAL
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("{}", error_record(&e));
            exit_code(&e)
        }
    }
}
