//! The `dagreserve` command-line tool.
//!
//! Exit codes: 0 success or pass, 1 analysis-level failure (invalid task,
//! failed constraint, violated invariant), 2 I/O or parse failure.

pub mod commands;
pub mod taskset;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use dagreserve_core::{BoundKind, SupplyPattern};
use thiserror::Error;

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAIL: u8 = 1;
pub const EXIT_IO: u8 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot access {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("cannot parse {}: {source}", path.display())]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },

    #[error("writing output: {0}")]
    Output(#[from] std::io::Error),

    #[error("no task named {0:?}")]
    UnknownTask(String),

    #[error("invalid task set")]
    Invalid(Vec<String>),

    #[error(transparent)]
    Core(#[from] dagreserve_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } | CliError::Parse { .. } | CliError::Output(_) => EXIT_IO,
            CliError::UnknownTask(_) | CliError::Invalid(_) | CliError::Core(_) => EXIT_FAIL,
        }
    }

    /// Diagnostic lines, each with the `E:` prefix.
    pub fn lines(&self) -> Vec<String> {
        match self {
            CliError::Invalid(v) => v.iter().map(|l| format!("E: {l}")).collect(),
            other => vec![format!("E: {other}")],
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "dagreserve",
    version,
    about = "Reservation analysis for probabilistic conditional DAG tasks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check every task of a task-set file.
    Validate(InputArgs),
    /// List the realizations of one task.
    Enumerate(EnumerateArgs),
    /// Miss probabilities and constraint verdicts for one configuration.
    Analyze(AnalyzeArgs),
    /// Minimal-budget configuration menus for every task.
    Optimize(OptimizeArgs),
    /// Simulate one task on one configuration and write an NDJSON trace.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct EnumerateArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub task: String,
    /// Machine-readable output.
    #[arg(long, conflicts_with = "table")]
    pub json: bool,
    /// Fixed-width table (the default).
    #[arg(long)]
    pub table: bool,
    /// Expected rows `[{"probability", "length", "volume"}]`; table rows
    /// whose computed length differs are flagged.
    #[arg(long)]
    pub expect: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Number of parallel reservation servers.
    #[arg(long)]
    pub m: u32,
    /// Service budget per server and period.
    #[arg(long)]
    pub e: f64,
    /// Replenishment period; defaults to the task's `p`, then its period.
    #[arg(long)]
    pub p: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub task: String,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Bound the constraints are checked against: `tight` or `simple`
    /// (the optimizer's default predicate).
    #[arg(long, default_value = "tight")]
    pub bound: BoundKind,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Use `P(R1 > D)^(k-1) P(R0 > D)` instead of `P(R1 > D)^k`.
    #[arg(long)]
    pub tight_bound: bool,
    /// Bisection tolerance as a fraction of the replenishment period.
    #[arg(long, default_value_t = 1e-6)]
    pub eps: f64,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub task: String,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub jobs: u64,
    #[arg(long, env = "DAGRESERVE_SEED")]
    pub seed: u64,
    #[arg(long, default_value = "worst_case")]
    pub supply: SupplyPattern,
    /// Also verify the per-job work/service inequality at every event.
    #[arg(long)]
    pub check_lemma: bool,
    #[arg(long)]
    pub output: PathBuf,
}

/// Parses `args` and runs the command, writing reports to `out` and
/// diagnostics to `err`. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { EXIT_IO } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Validate(a) => commands::validate(a, out),
        Command::Enumerate(a) => commands::enumerate(a, out),
        Command::Analyze(a) => commands::analyze(a, out),
        Command::Optimize(a) => commands::optimize(a, out),
        Command::Simulate(a) => commands::simulate(a, out),
    };
    match result {
        Ok(report) => {
            for line in &report.diagnostics {
                let _ = writeln!(err, "E: {line}");
            }
            if report.pass {
                EXIT_OK
            } else {
                EXIT_FAIL
            }
        }
        Err(e) => {
            for line in e.lines() {
                let _ = writeln!(err, "{line}");
            }
            e.exit_code()
        }
    }
}
