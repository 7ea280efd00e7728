use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::process::{Child, Command as Process};
use std::time::Duration;

use csd_sim::harness::{worker_loop, Coordinator, CoordinatorOptions, Endpoint, WorkerConfig, WorkerExit};
use csd_sim::reproduce::reproduce as run_target;
use csd_sim::scenario::Scenario;
use csd_sim::scheduler::{calibrate_ratio, write_ledger_csv};
use csd_sim::simulator::{self, write_sweep_csv, SweepRow};
use csd_sim::topology::{NodeId, NodeKind, NodeSpec};
use csd_sim::workload::{builtin_profile, BUILTIN_PROFILES};
use csd_sim::{ClusterConfig, Error, SchedulerConfig, WorkloadProfile};
use log::info;

use crate::{CalibrateArgs, ConfigArgs, CoordinatorArgs, ReproduceArgs, SimulateArgs, SweepArgs, WorkerArgs};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(Error),
    Tolerance(String),
    Runtime(Error),
}

impl CliError {
    pub const USAGE: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const TOLERANCE: u8 = 3;

    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Runtime(_) => Self::USAGE,
            CliError::Config(_) => Self::CONFIG,
            CliError::Tolerance(_) => Self::TOLERANCE,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Tolerance(m) => f.write_str(m),
            CliError::Config(e) | CliError::Runtime(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            e if e.is_config() => CliError::Config(e),
            Error::InvalidArgument(m) => CliError::Usage(m),
            e => CliError::Runtime(e),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

type CliResult = Result<(), CliError>;

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Builtin profile name, or a path to a JSON profile.
fn resolve_profile(spec: &str) -> Result<WorkloadProfile, CliError> {
    if BUILTIN_PROFILES.contains(&spec) {
        return Ok(builtin_profile(spec)?);
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(CliError::Config(Error::UnknownProfile(spec.to_string())));
    }
    let text = std::fs::read_to_string(path)?;
    Ok(WorkloadProfile::from_json(&text)?)
}

fn poll_seconds(ms: f64) -> Result<f64, CliError> {
    if ms.is_finite() && ms > 0.0 {
        Ok(ms / 1000.0)
    } else {
        Err(CliError::Usage(format!("--poll-ms must be > 0, got {ms}")))
    }
}

fn load_config(c: &ConfigArgs) -> Result<Scenario, CliError> {
    let mut scenario = match &c.scenario {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
            Scenario::from_json(&text)?
        }
        None => {
            // clap guarantees these when no scenario is given
            let profile = resolve_profile(c.profile.as_deref().unwrap_or_default())?;
            let cluster = match &c.cluster {
                Some(path) => ClusterConfig::from_json(&std::fs::read_to_string(path)?)?,
                None => ClusterConfig::new(c.csds.unwrap_or(36))?,
            };
            let scheduler = SchedulerConfig::new(c.batch.unwrap_or_default(), c.ratio.unwrap_or_default());
            Scenario { profile, cluster, scheduler, sweep: None, output: None }
        }
    };
    if let Some(ms) = c.poll_ms {
        scenario.scheduler.poll_interval = poll_seconds(ms)?;
    }
    if let Some(n) = c.items {
        if n == 0 {
            return Err(CliError::Usage("--items must be > 0".into()));
        }
        scenario.profile = scenario.profile.with_total_items(n);
    }
    scenario.scheduler.validate()?;
    Ok(scenario)
}

pub fn simulate(a: SimulateArgs) -> CliResult {
    let s = load_config(&a.config)?;
    let sim = simulator::simulate(&s.cluster, &s.profile, &s.scheduler)?;
    let r = &sim.report;

    let mut out = io::stdout().lock();
    writeln!(out, "workload          {}", r.workload)?;
    writeln!(out, "csds              {}", r.csd_count)?;
    writeln!(out, "batch size        {} (host {})", r.csd_batch_size, r.host_batch_size)?;
    writeln!(out, "items             {}", r.total_items)?;
    writeln!(out, "makespan_s        {:.4}", r.makespan)?;
    writeln!(out, "throughput        {:.4}", r.throughput)?;
    writeln!(out, "host-only         {:.4}", r.baseline_throughput)?;
    writeln!(out, "speedup           {:.4}", r.throughput / r.baseline_throughput)?;
    writeln!(out, "csd share ledger  {:.6}", r.csd_fraction)?;
    match r.csd_fraction_paired {
        Some(f) => writeln!(out, "csd share paired  {:.6}", f)?,
        None => writeln!(out, "csd share paired  n/a (slower than host-only)")?,
    }
    writeln!(out, "latency mean/p95  {:.4} / {:.4}", r.latency.mean, r.latency.p95)?;
    writeln!(out, "bytes to host     {:.0}", r.transfer.bytes_to_host())?;
    writeln!(out, "energy mJ/item    {:.4} ({:.1}% saved)", r.energy.energy_per_item_mj, r.energy.savings_percent)?;
    for p in r.saturated_paths() {
        writeln!(out, "warning: {:?} path saturated ({:.0} of {:.0} B/s)", p.path, p.bytes_per_sec, p.capacity)?;
    }

    if let Some(path) = &a.csv {
        let row = SweepRow { csd_count: r.csd_count, batch_size: r.csd_batch_size, report: r.clone() };
        write_sweep_csv(std::slice::from_ref(&row), create(path)?)?;
    }
    if let Some(path) = &a.ledger {
        write_ledger_csv(&sim.ledger, &s.scheduler, create(path)?)?;
    }
    if let Some(path) = &a.json {
        let mut f = create(path)?;
        serde_json::to_writer_pretty(&mut f, r).map_err(Error::from)?;
        writeln!(f)?;
    }
    Ok(())
}

pub fn sweep(a: SweepArgs) -> CliResult {
    let s = load_config(&a.config)?;
    let (batches, counts) = match (a.batches.is_empty(), a.csd_counts.is_empty()) {
        (false, false) => (a.batches.clone(), a.csd_counts.clone()),
        (true, true) if s.sweep.is_some() => {
            let axes = s.sweep_axes()?;
            (axes.batch_sizes.clone(), axes.csd_counts.clone())
        }
        (true, true) => {
            return Err(CliError::Usage("sweep needs --batches and --csd-counts or a scenario with `sweep`".into()))
        }
        _ => return Err(CliError::Usage("give both --batches and --csd-counts".into())),
    };
    let rows = if a.sequential {
        simulator::sweep_sequential(&s.cluster, &s.profile, &s.scheduler, &batches, &counts)?
    } else {
        simulator::sweep(&s.cluster, &s.profile, &s.scheduler, &batches, &counts)?
    };
    match a.out.as_ref().or(s.output.as_ref()) {
        Some(path) => write_sweep_csv(&rows, create(path)?)?,
        None => write_sweep_csv(&rows, io::stdout().lock())?,
    }
    Ok(())
}

pub fn calibrate(a: CalibrateArgs) -> CliResult {
    let (ratio, raw) = calibrate_ratio(a.host_rate, a.csd_rate, a.policy.into())?;
    println!("batch_ratio {ratio}");
    println!("raw_ratio {raw:.4}");
    Ok(())
}

pub fn reproduce(a: ReproduceArgs) -> CliResult {
    let mut failed = Vec::new();
    for target in a.target.targets() {
        let r = run_target(target)?;
        r.write_files(&a.out, a.gnuplot)?;
        r.write_text(io::stdout().lock())?;
        if !r.passed() {
            failed.push(target.to_string());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Tolerance(format!("outside tolerance: {}", failed.join(", "))))
    }
}

fn spawn_workers(a: &CoordinatorArgs, ep: &Endpoint, cluster: &ClusterConfig) -> Result<Vec<Child>, CliError> {
    let exe = std::env::current_exe()?;
    let mode = match a.mode {
        crate::ModeArg::Spin => "spin",
        crate::ModeArg::Sleep => "sleep",
    };
    cluster
        .nodes()
        .iter()
        .map(|n| {
            Process::new(&exe)
                .arg("harness-worker")
                .args(["--connect", &ep.to_string()])
                .args(["--node", &n.id.to_string()])
                .args(["--profile", &a.profile])
                .args(["--batch", &a.batch.to_string()])
                .args(["--ratio", &a.ratio.to_string()])
                .arg("--workdir")
                .arg(&a.workdir)
                .args(["--scale", &a.scale.to_string()])
                .args(["--mode", mode])
                .spawn()
                .map_err(CliError::from)
        })
        .collect()
}

pub fn coordinator(a: CoordinatorArgs) -> CliResult {
    if a.workers == 0 {
        return Err(CliError::Usage("--workers must be >= 1 (the host)".into()));
    }
    if !(a.timeout_s.is_finite() && a.timeout_s > 0.0) {
        return Err(CliError::Usage("--timeout-s must be > 0".into()));
    }
    let listen: Endpoint = a.listen.parse()?;
    let mut profile = resolve_profile(&a.profile)?.scaled_rates(a.scale)?;
    if let Some(n) = a.items {
        profile = profile.with_total_items(n);
    }
    let cluster = ClusterConfig::new(a.workers - 1)?;
    let mut cfg = SchedulerConfig::new(a.batch, a.ratio);
    cfg.poll_interval = poll_seconds(a.poll_ms)?;
    cfg.validate()?;

    let coord = Coordinator::bind(&listen)?;
    let ep = coord.local_endpoint()?;
    info!("listening on {ep}");
    let children = if a.spawn { spawn_workers(&a, &ep, &cluster)? } else { Vec::new() };
    let opts = CoordinatorOptions { workdir: a.workdir.clone(), worker_timeout: Duration::from_secs_f64(a.timeout_s) };
    let report = coord.run(&cluster, &profile, &cfg, &opts)?;
    for mut c in children {
        let _ = c.wait();
    }

    let predicted = simulator::run(&cluster, &profile, &cfg)?;
    println!("workload          {}", report.workload);
    println!("workers           {}", a.workers);
    println!("items             {}", report.total_items);
    println!("makespan_s        {:.4}", report.makespan_s);
    println!("throughput        {:.4}", report.throughput);
    println!("simulated         {:.4}", predicted.throughput);
    println!("valid             {}", report.valid);

    if let Some(path) = &a.ledger {
        write_ledger_csv(&report.ledger, &cfg, create(path)?)?;
    }
    if let Some(path) = &a.report {
        let mut f = create(path)?;
        serde_json::to_writer_pretty(&mut f, &report).map_err(Error::from)?;
        writeln!(f)?;
    }
    match report.abort_reason {
        Some(reason) => Err(CliError::Runtime(Error::Harness(reason))),
        None => Ok(()),
    }
}

pub fn worker(a: WorkerArgs) -> CliResult {
    let endpoint: Endpoint = a.connect.parse()?;
    let id: NodeId = a.node.parse()?;
    let kind = if id == NodeId::HOST { NodeKind::Host } else { NodeKind::Csd };
    let profile = resolve_profile(&a.profile)?;
    let cfg = SchedulerConfig::new(a.batch, a.ratio);
    cfg.validate()?;
    let mut wc = WorkerConfig::from_profile(
        endpoint,
        NodeSpec { id, kind },
        &profile,
        &cfg,
        a.scale,
        a.workdir.clone(),
        a.mode.into(),
    )?;
    if let Some(rate) = a.rate {
        wc.rate = rate;
    }
    match worker_loop(&wc)? {
        WorkerExit::Drained => info!("{id} drained"),
        WorkerExit::ConnectionLost => info!("{id} lost its coordinator"),
    }
    Ok(())
}
