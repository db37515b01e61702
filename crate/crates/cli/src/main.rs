//! `efsgd` command-line runner.
//!
//! Exit codes: 0 success, 1 runtime failure (divergence, failed invariant,
//! unreadable run directory), 2 usage or configuration error.

mod overrides;
mod report;
mod sweep;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::Value;

use efsgd::harness::{run_experiment, run_verification_suite, write_metrics_csv, RunSummary};
use efsgd::{Error, RunConfig};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "EFSGD_OUT";

#[derive(Parser)]
#[command(name = "efsgd", version, about = "Error-feedback SGD simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write metrics.csv and summary.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to $EFSGD_OUT/<config name>.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Dotted-path override, e.g. `schedule.gamma=0.05`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Run the cross product of a grid over a base config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the invariant suite and print a pass/fail table.
    Verify {
        /// Perturb worker residuals so that the recurrence checks must fail.
        #[arg(long)]
        fault_inject: bool,
    },
    /// Merge run directories into one comparison CSV and a text summary.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Output directory; defaults to $EFSGD_OUT/report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Divergence { .. }
            | Error::StepsizeTooLarge { .. }
            | Error::Io(_)
            | Error::MalformedMessage(_)
            | Error::InvalidMessage(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn out_root() -> PathBuf {
    std::env::var_os(OUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

pub fn default_out(config: &Path) -> PathBuf {
    let stem = config
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    out_root().join(stem)
}

pub fn read_json(path: &Path) -> CliResult<Value> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{} is not valid JSON: {e}", path.display())))
}

pub fn parse_config(value: Value) -> CliResult<RunConfig> {
    let config: RunConfig = serde_json::from_value(value)
        .map_err(|e| CliError::Usage(format!("invalid config: {e}")))?;
    config.validate()?;
    Ok(config)
}

/// Runs `config` and writes its artifacts into `out`.
pub fn execute(config: &RunConfig, out: &Path) -> CliResult<RunSummary> {
    let result = run_experiment(config)?;
    fs::create_dir_all(out)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out.display())))?;
    write_metrics_csv(&out.join("metrics.csv"), &result.metrics)?;
    let summary = RunSummary::new(config, &result);
    summary.write(&out.join("summary.json"))?;
    if !result.report.passed {
        return Err(CliError::Runtime(format!(
            "invariant check failed: {}",
            result.report.failures().join(", ")
        )));
    }
    Ok(summary)
}

fn cmd_run(config: &Path, out: Option<PathBuf>, set: &[String]) -> CliResult<()> {
    let mut value = read_json(config)?;
    for s in set {
        let (key, v) = overrides::parse_assignment(s).map_err(CliError::Usage)?;
        overrides::set_path(&mut value, &key, v).map_err(CliError::Usage)?;
    }
    let config_value = parse_config(value)?;
    let out = out.unwrap_or_else(|| default_out(config));
    let summary = execute(&config_value, &out)?;
    println!(
        "{}: {} iterations, final loss {:.6e}, |grad|^2 {:.6e}",
        out.display(),
        summary.final_metrics.iterations,
        summary.final_metrics.loss,
        summary.final_metrics.grad_norm_sq
    );
    Ok(())
}

fn cmd_verify(fault_inject: bool) -> CliResult<()> {
    let results = run_verification_suite(fault_inject);
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    for r in &results {
        let status = if r.passed { "PASS" } else { "FAIL" };
        println!("{status}  {:width$}  {}", r.name, r.detail);
    }
    let failed: Vec<&str> = results
        .iter()
        .filter(|r| !r.passed)
        .map(|r| r.name)
        .collect();
    println!(
        "{} of {} checks passed",
        results.len() - failed.len(),
        results.len()
    );
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Runtime(format!(
            "failed checks: {}",
            failed.join(", ")
        )))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, set } => cmd_run(&config, out, &set),
        Command::Sweep { config, out } => sweep::cmd_sweep(&config, out),
        Command::Verify { fault_inject } => cmd_verify(fault_inject),
        Command::Report { dirs, out } => report::cmd_report(&dirs, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
