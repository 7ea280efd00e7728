//! Canonical reproduction runs: each target runs a fixed scenario and
//! compares simulated figures against the published ones.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::energy::{energy_per_item, savings, wall_power};
use crate::error::{Error, Result};
use crate::scheduler::SchedulerConfig;
use crate::simulator::{run, sweep, write_sweep_csv, SweepRow};
use crate::topology::{ClusterConfig, NodeKind, PowerMeasurements};
use crate::transfer::{account, csd_fraction_paired};
use crate::workload::{builtin_profile, WorkloadProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Fig4a,
    Fig4b,
    Fig4c,
    Table1,
}

impl Target {
    pub const ALL: [Target; 4] = [Target::Fig4a, Target::Fig4b, Target::Fig4c, Target::Table1];

    pub fn name(self) -> &'static str {
        match self {
            Target::Fig4a => "fig4a",
            Target::Fig4b => "fig4b",
            Target::Fig4c => "fig4c",
            Target::Table1 => "table1",
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Target::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown target `{s}` (fig4a, fig4b, fig4c, table1)")))
    }
}

/// One benchmark's canonical configuration and published results.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Benchmark {
    pub workload: &'static str,
    pub batch_size: u64,
    pub batch_ratio: f64,
    pub batch_axis: [u64; 4],
    pub host_only: f64,
    /// Aggregate throughput with all 36 drives at `batch_size`.
    pub with_csds: f64,
    /// Relative tolerance on `with_csds`.
    pub tolerance: f64,
    pub max_speedup: f64,
    pub energy_host_mj: f64,
    pub energy_csd_mj: f64,
    pub savings_percent: f64,
    pub csd_share_percent: f64,
}

pub const SPEECH: Benchmark = Benchmark {
    workload: "speech_to_text",
    batch_size: 6,
    batch_ratio: 20.0,
    batch_axis: [2, 4, 6, 8],
    host_only: 96.0,
    with_csds: 296.0,
    tolerance: 0.05,
    max_speedup: 3.1,
    energy_host_mj: 5021.0,
    energy_csd_mj: 1662.0,
    savings_percent: 67.0,
    csd_share_percent: 68.0,
};

pub const RECOMMENDER: Benchmark = Benchmark {
    workload: "recommender",
    batch_size: 200,
    batch_ratio: 22.0,
    batch_axis: [50, 100, 200, 250],
    host_only: 579.0,
    with_csds: 1506.0,
    tolerance: 0.05,
    max_speedup: 2.8,
    energy_host_mj: 832.0,
    energy_csd_mj: 327.0,
    savings_percent: 61.0,
    csd_share_percent: 64.0,
};

pub const SENTIMENT: Benchmark = Benchmark {
    workload: "sentiment",
    batch_size: 40_000,
    batch_ratio: 26.0,
    batch_axis: [1_000, 10_000, 40_000, 100_000],
    host_only: 9496.0,
    with_csds: 20994.0,
    tolerance: 0.10,
    max_speedup: 2.2,
    energy_host_mj: 51.0,
    energy_csd_mj: 23.0,
    savings_percent: 54.0,
    csd_share_percent: 56.0,
};

pub const BENCHMARKS: [Benchmark; 3] = [SPEECH, RECOMMENDER, SENTIMENT];

pub const CSD_AXIS: [usize; 10] = [0, 4, 8, 12, 16, 20, 24, 28, 32, 36];

/// Input bytes the speech benchmark keeps on the drives.
pub const SPEECH_RETAINED_BYTES: f64 = 2.58e9;

impl Benchmark {
    pub fn profile(&self) -> Result<WorkloadProfile> {
        builtin_profile(self.workload)
    }

    pub fn scheduler(&self) -> SchedulerConfig {
        SchedulerConfig::new(self.batch_size, self.batch_ratio)
    }

    pub fn cluster(&self) -> Result<ClusterConfig> {
        ClusterConfig::new(36)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Tolerance {
    /// Equal up to floating-point and nanosecond rounding (relative 1e-9).
    Exact,
    /// `|sim - reference| <= f * reference`.
    Relative(f64),
    /// `|sim - reference| <= d`.
    Absolute(f64),
    /// `lo <= sim <= hi`.
    Range(f64, f64),
    /// Reported, never gates.
    Info,
}

impl fmt::Display for Tolerance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Tolerance::Exact => f.write_str("exact"),
            Tolerance::Relative(r) => write!(f, "±{}%", r * 100.0),
            Tolerance::Absolute(d) => write!(f, "±{d}"),
            Tolerance::Range(lo, hi) => write!(f, "[{lo}, {hi}]"),
            Tolerance::Info => f.write_str("info"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub simulated: f64,
    pub reference: f64,
    pub tolerance: Tolerance,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, simulated: f64, reference: f64, tolerance: Tolerance) -> Self {
        let pass = match tolerance {
            Tolerance::Exact => (simulated - reference).abs() <= 1e-9 * reference.abs(),
            Tolerance::Relative(r) => (simulated - reference).abs() <= r * reference.abs(),
            Tolerance::Absolute(d) => (simulated - reference).abs() <= d,
            Tolerance::Range(lo, hi) => (lo..=hi).contains(&simulated),
            Tolerance::Info => true,
        };
        Self { name: name.into(), simulated, reference, tolerance, pass }
    }

    pub fn gates(&self) -> bool {
        self.tolerance != Tolerance::Info
    }

    fn status(&self) -> &'static str {
        match (self.gates(), self.pass) {
            (false, _) => "INFO",
            (true, true) => "PASS",
            (true, false) => "FAIL",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Reproduction {
    pub target: Target,
    pub checks: Vec<Check>,
    /// Sweep rows for figure targets; the canonical runs for the table.
    pub rows: Vec<SweepRow>,
}

impl Reproduction {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}: simulated vs published", self.target)?;
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        for c in &self.checks {
            writeln!(
                out,
                "{}  {:width$}  simulated {:>12.4}  reference {:>10.4}  {}",
                c.status(),
                c.name,
                c.simulated,
                c.reference,
                c.tolerance,
            )?;
        }
        let failed = self.failures().count();
        if failed == 0 {
            writeln!(out, "{}: all checks within tolerance", self.target)?;
        } else {
            writeln!(out, "{}: {failed} check(s) outside tolerance", self.target)?;
        }
        Ok(())
    }

    pub fn write_checks_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["target", "check", "simulated", "reference", "tolerance", "status"])?;
        for c in &self.checks {
            w.write_record([
                self.target.name().to_string(),
                c.name.clone(),
                format!("{:.6}", c.simulated),
                format!("{}", c.reference),
                c.tolerance.to_string(),
                c.status().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Gnuplot script plotting throughput against drive count, one line per
    /// batch size, from `<target>.csv`.
    pub fn gnuplot_script(&self) -> Option<String> {
        if self.target == Target::Table1 {
            return None;
        }
        let mut batches: Vec<u64> = self.rows.iter().map(|r| r.batch_size).collect();
        batches.dedup();
        let name = self.target.name();
        let plots: Vec<String> = batches
            .iter()
            .map(|b| {
                format!("  '{name}.csv' using ($3=={b} ? $2 : 1/0):5 with linespoints title 'batch {b}'")
            })
            .collect();
        Some(format!(
            "set datafile separator ','\nset key left top\nset xlabel 'number of CSDs'\nset ylabel 'items/s'\nset terminal pngcairo size 800,500\nset output '{name}.png'\nplot \\\n{}\n",
            plots.join(", \\\n")
        ))
    }

    /// Writes `<target>.csv`, `<target>_checks.csv`, `<target>.txt` and,
    /// when asked, `<target>.gp` into `dir`.
    pub fn write_files(&self, dir: &Path, gnuplot: bool) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let name = self.target.name();
        let mut written = Vec::new();
        let mut file = |suffix: &str| -> Result<std::fs::File> {
            let p = dir.join(format!("{name}{suffix}"));
            let f = std::fs::File::create(&p)?;
            written.push(p);
            Ok(f)
        };
        write_sweep_csv(&self.rows, file(".csv")?)?;
        self.write_checks_csv(file("_checks.csv")?)?;
        self.write_text(file(".txt")?)?;
        if gnuplot {
            if let Some(script) = self.gnuplot_script() {
                file(".gp")?.write_all(script.as_bytes())?;
            }
        }
        Ok(written)
    }
}

pub fn reproduce(target: Target) -> Result<Reproduction> {
    match target {
        Target::Fig4a => figure(target, &SPEECH),
        Target::Fig4b => figure(target, &RECOMMENDER),
        Target::Fig4c => figure(target, &SENTIMENT),
        Target::Table1 => table1(),
    }
}

fn spread(values: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    (hi - lo) / hi
}

fn figure(target: Target, bench: &Benchmark) -> Result<Reproduction> {
    let profile = bench.profile()?;
    let rows = sweep(&bench.cluster()?, &profile, &bench.scheduler(), &bench.batch_axis, &CSD_AXIS)?;
    let cell = |n: usize, b: u64| {
        rows.iter()
            .find(|r| r.csd_count == n && r.batch_size == b)
            .map(|r| r.report.throughput)
            .expect("cell is on the sweep axes")
    };
    let full = cell(36, bench.batch_size);
    let mut checks = vec![
        Check::new("N=0 host-only throughput", cell(0, bench.batch_size), bench.host_only, Tolerance::Exact),
        Check::new(
            format!("N=36 B={} throughput", bench.batch_size),
            full,
            bench.with_csds,
            Tolerance::Relative(bench.tolerance),
        ),
    ];
    if target == Target::Fig4a {
        checks.push(Check::new("N=36 speedup over host-only", full / bench.host_only, bench.max_speedup, Tolerance::Range(2.8, 3.2)));
    }
    let at_36 = rows.iter().filter(|r| r.csd_count == 36).map(|r| r.report.throughput);
    checks.push(Check::new("N=36 spread across batch sizes", spread(at_36), 0.0, Tolerance::Info));
    Ok(Reproduction { target, checks, rows })
}

fn table1() -> Result<Reproduction> {
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    let m = PowerMeasurements::default();
    let power = m.into_model()?;
    let p_host = wall_power(&power, 0)?;
    let p_all = wall_power(&power, power.num_csds_reference)?;

    for bench in &BENCHMARKS {
        let w = bench.workload;
        let profile = bench.profile()?;
        let report = run(&bench.cluster()?, &profile, &bench.scheduler())?;

        checks.push(Check::new(
            format!("{w} max speedup"),
            report.throughput / bench.host_only,
            bench.max_speedup,
            Tolerance::Relative(0.10),
        ));

        // energy cells from the published throughputs
        let host_mj = energy_per_item(p_host, bench.host_only)?;
        let csd_mj = energy_per_item(p_all, bench.with_csds)?;
        checks.push(Check::new(format!("{w} energy/item host (mJ)"), host_mj, bench.energy_host_mj, Tolerance::Relative(0.01)));
        checks.push(Check::new(format!("{w} energy/item w/CSD (mJ)"), csd_mj, bench.energy_csd_mj, Tolerance::Relative(0.01)));
        checks.push(Check::new(
            format!("{w} energy saving (%)"),
            savings(host_mj, csd_mj),
            bench.savings_percent,
            Tolerance::Absolute(1.0),
        ));

        // the same cells from simulated throughputs
        checks.push(Check::new(
            format!("{w} simulated energy/item w/CSD (mJ)"),
            report.energy.energy_per_item_mj,
            bench.energy_csd_mj,
            Tolerance::Info,
        ));
        checks.push(Check::new(
            format!("{w} simulated energy saving (%)"),
            report.energy.savings_percent,
            bench.savings_percent,
            Tolerance::Info,
        ));
        if let Some(f) = report.csd_fraction_paired {
            checks.push(Check::new(format!("{w} simulated in-CSD share (%)"), f * 100.0, bench.csd_share_percent, Tolerance::Info));
        }
        checks.push(Check::new(
            format!("{w} ledger in-CSD share (%)"),
            report.csd_fraction * 100.0,
            bench.csd_share_percent,
            Tolerance::Info,
        ));
        rows.push(SweepRow { csd_count: 36, batch_size: bench.batch_size, report });
    }

    // in-storage share and retained bytes of the speech benchmark
    let share = csd_fraction_paired(SPEECH.with_csds, SPEECH.host_only)?;
    checks.push(Check::new("speech_to_text in-CSD fraction (296, 96)", share, 0.676, Tolerance::Absolute(0.001)));
    let speech = SPEECH.profile()?;
    let on_csd = (share * speech.total_items as f64).round() as u64;
    let split = [(NodeKind::Host, speech.total_items - on_csd), (NodeKind::Csd, on_csd)];
    let retained = account(&speech, &split)?.bytes_retained_in_csd;
    checks.push(Check::new("speech_to_text bytes retained in CSDs", retained, SPEECH_RETAINED_BYTES, Tolerance::Relative(0.02)));

    // server power decomposition
    checks.push(Check::new("idle power per CSD (W)", m.derive_per_csd_idle()?, 6.6, Tolerance::Absolute(0.05)));
    checks.push(Check::new("active power per ISP engine (W)", m.derive_per_isp_active()?, 0.28, Tolerance::Absolute(0.005)));

    Ok(Reproduction { target: Target::Table1, checks, rows })
}
