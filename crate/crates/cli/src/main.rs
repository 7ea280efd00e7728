//! `csdsim`: simulate, sweep and reproduce CSD-augmented storage servers,
//! and drive the live multi-process harness.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use csd_sim::harness::WorkMode;
use csd_sim::reproduce::Target;
use csd_sim::scheduler::RatioPolicy;

use commands::CliError;

#[derive(Debug, Parser)]
#[command(name = "csdsim", version, about = "Simulator and live harness for CSD-augmented storage servers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one configuration to completion and report.
    Simulate(SimulateArgs),
    /// Run the cartesian product of batch sizes and drive counts.
    Sweep(SweepArgs),
    /// Batch ratio that balances two processing rates.
    Calibrate(CalibrateArgs),
    /// Re-run a published figure or table and compare.
    Reproduce(ReproduceArgs),
    /// Coordinator of a live run against worker processes.
    HarnessCoordinator(CoordinatorArgs),
    /// One worker process of a live run.
    HarnessWorker(WorkerArgs),
}

/// Inline configuration, used when no scenario file is given.
#[derive(Debug, Args)]
struct ConfigArgs {
    /// JSON scenario file (profile, cluster, scheduler, sweep axes).
    #[arg(long, conflicts_with_all = ["profile", "cluster", "csds", "batch", "ratio"])]
    scenario: Option<PathBuf>,
    /// Builtin profile name or path to a JSON profile.
    #[arg(long, required_unless_present = "scenario")]
    profile: Option<String>,
    /// JSON cluster file.
    #[arg(long, conflicts_with = "csds")]
    cluster: Option<PathBuf>,
    /// Number of CSDs next to the host.
    #[arg(long)]
    csds: Option<usize>,
    /// CSD batch size.
    #[arg(long, required_unless_present = "scenario")]
    batch: Option<u64>,
    /// Host/CSD batch-size ratio.
    #[arg(long, required_unless_present = "scenario")]
    ratio: Option<f64>,
    /// Scheduler poll interval in milliseconds.
    #[arg(long)]
    poll_ms: Option<f64>,
    /// Override the workload's item count.
    #[arg(long)]
    items: Option<u64>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Write the report as one row of the sweep CSV schema.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Write the batch assignment ledger CSV.
    #[arg(long)]
    ledger: Option<PathBuf>,
    /// Write the full report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Comma-separated CSD batch sizes.
    #[arg(long, value_delimiter = ',')]
    batches: Vec<u64>,
    /// Comma-separated drive counts; 0 is the host-only run.
    #[arg(long = "csd-counts", value_delimiter = ',')]
    csd_counts: Vec<usize>,
    /// Output CSV; defaults to the scenario's `output`, else stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run cells one after another instead of in parallel.
    #[arg(long)]
    sequential: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyArg {
    Round,
    Ceil,
    Floor,
}

impl From<PolicyArg> for RatioPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Round => RatioPolicy::Round,
            PolicyArg::Ceil => RatioPolicy::Ceil,
            PolicyArg::Floor => RatioPolicy::Floor,
        }
    }
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[arg(long)]
    host_rate: f64,
    #[arg(long)]
    csd_rate: f64,
    #[arg(long, value_enum, default_value = "round")]
    policy: PolicyArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TargetArg {
    Fig4a,
    Fig4b,
    Fig4c,
    Table1,
    All,
}

impl TargetArg {
    fn targets(self) -> Vec<Target> {
        match self {
            TargetArg::Fig4a => vec![Target::Fig4a],
            TargetArg::Fig4b => vec![Target::Fig4b],
            TargetArg::Fig4c => vec![Target::Fig4c],
            TargetArg::Table1 => vec![Target::Table1],
            TargetArg::All => Target::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Args)]
struct ReproduceArgs {
    #[arg(value_enum)]
    target: TargetArg,
    /// Directory for the CSV and text reports.
    #[arg(long, default_value = "reproduce")]
    out: PathBuf,
    /// Also write a gnuplot script per figure.
    #[arg(long)]
    gnuplot: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Spin,
    Sleep,
}

impl From<ModeArg> for WorkMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Spin => WorkMode::Spin,
            ModeArg::Sleep => WorkMode::Sleep,
        }
    }
}

#[derive(Debug, Args)]
struct CoordinatorArgs {
    /// `unix:<path>` or `host:port`.
    #[arg(long)]
    listen: String,
    /// Total worker count: one host plus N-1 CSDs.
    #[arg(long)]
    workers: usize,
    /// Builtin profile name or path to a JSON profile.
    #[arg(long)]
    profile: String,
    #[arg(long)]
    batch: u64,
    #[arg(long)]
    ratio: f64,
    #[arg(long, default_value_t = 200.0)]
    poll_ms: f64,
    /// Shared directory for index files.
    #[arg(long)]
    workdir: PathBuf,
    /// Divide every rate by this factor.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// Override the workload's item count.
    #[arg(long)]
    items: Option<u64>,
    /// Seconds of worker silence before the run is aborted.
    #[arg(long, default_value_t = 30.0)]
    timeout_s: f64,
    /// Launch the workers as local child processes.
    #[arg(long)]
    spawn: bool,
    /// Work mode for spawned workers.
    #[arg(long, value_enum, default_value = "spin")]
    mode: ModeArg,
    /// Write the harness report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write the live assignment ledger CSV.
    #[arg(long)]
    ledger: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct WorkerArgs {
    /// Coordinator endpoint.
    #[arg(long)]
    connect: String,
    /// `host` or `csd<N>`.
    #[arg(long)]
    node: String,
    #[arg(long)]
    profile: String,
    #[arg(long)]
    batch: u64,
    #[arg(long)]
    ratio: f64,
    #[arg(long)]
    workdir: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// Items/sec; defaults to the profile's rate for this node.
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long, value_enum, default_value = "spin")]
    mode: ModeArg,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(CliError::USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Calibrate(a) => commands::calibrate(a),
        Command::Reproduce(a) => commands::reproduce(a),
        Command::HarnessCoordinator(a) => commands::coordinator(a),
        Command::HarnessWorker(a) => commands::worker(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
