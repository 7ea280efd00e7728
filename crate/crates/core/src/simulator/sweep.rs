//! Cartesian sweeps over CSD batch size and drive count.
//!
//! Cells are independent runs. With the `parallel` feature they execute on
//! the rayon pool; either way rows come back in (batch, count) order.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scheduler::SchedulerConfig;
use crate::topology::ClusterConfig;
use crate::workload::WorkloadProfile;

use super::{host_only, run, SimReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub csd_count: usize,
    pub batch_size: u64,
    pub report: SimReport,
}

pub const SWEEP_CSV_HEADER: &str = "workload,csd_count,batch_size,batch_ratio,throughput_items_per_s,makespan_s,csd_fraction_ledger,csd_fraction_paired,mean_latency_s,p95_latency_s,bytes_to_host,energy_mj_per_item";

fn cells(batch_sizes: &[u64], csd_counts: &[usize]) -> Result<Vec<(u64, usize)>> {
    if batch_sizes.is_empty() || csd_counts.is_empty() {
        return Err(Error::InvalidArgument("sweep axes must be non-empty".into()));
    }
    Ok(batch_sizes
        .iter()
        .flat_map(|&b| csd_counts.iter().map(move |&n| (b, n)))
        .collect())
}

fn run_cell(
    cluster: &ClusterConfig,
    profile: &WorkloadProfile,
    base: &SchedulerConfig,
    (batch, csds): (u64, usize),
) -> Result<SweepRow> {
    let wrap = |e: Error| Error::SweepCell { batch, csds, source: Box::new(e) };
    let cfg = SchedulerConfig { csd_batch_size: batch, ..*base };
    let report = if csds == 0 {
        host_only(cluster, profile, &cfg)
    } else {
        cluster.with_csd_count(csds).and_then(|c| run(&c, profile, &cfg))
    }
    .map_err(wrap)?;
    Ok(SweepRow { csd_count: csds, batch_size: batch, report })
}

pub fn sweep_sequential(
    cluster: &ClusterConfig,
    profile: &WorkloadProfile,
    base: &SchedulerConfig,
    batch_sizes: &[u64],
    csd_counts: &[usize],
) -> Result<Vec<SweepRow>> {
    cells(batch_sizes, csd_counts)?
        .into_iter()
        .map(|cell| run_cell(cluster, profile, base, cell))
        .collect()
}

#[cfg(feature = "parallel")]
pub fn sweep_parallel(
    cluster: &ClusterConfig,
    profile: &WorkloadProfile,
    base: &SchedulerConfig,
    batch_sizes: &[u64],
    csd_counts: &[usize],
) -> Result<Vec<SweepRow>> {
    use rayon::prelude::*;
    cells(batch_sizes, csd_counts)?
        .into_par_iter()
        .map(|cell| run_cell(cluster, profile, base, cell))
        .collect()
}

/// Runs every (batch, count) cell. Drive count 0 is the host-only
/// reference run.
pub fn sweep(
    cluster: &ClusterConfig,
    profile: &WorkloadProfile,
    base: &SchedulerConfig,
    batch_sizes: &[u64],
    csd_counts: &[usize],
) -> Result<Vec<SweepRow>> {
    #[cfg(feature = "parallel")]
    {
        sweep_parallel(cluster, profile, base, batch_sizes, csd_counts)
    }
    #[cfg(not(feature = "parallel"))]
    {
        sweep_sequential(cluster, profile, base, batch_sizes, csd_counts)
    }
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_CSV_HEADER.split(','))?;
    for row in rows {
        let r = &row.report;
        w.write_record([
            r.workload.clone(),
            row.csd_count.to_string(),
            row.batch_size.to_string(),
            r.batch_ratio.to_string(),
            format!("{:.4}", r.throughput),
            format!("{:.4}", r.makespan),
            format!("{:.6}", r.csd_fraction),
            r.csd_fraction_paired.map(|f| format!("{f:.6}")).unwrap_or_default(),
            format!("{:.4}", r.latency.mean),
            format!("{:.4}", r.latency.p95),
            format!("{:.0}", r.transfer.bytes_to_host()),
            format!("{:.4}", r.energy.energy_per_item_mj),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::builtin_profile;

    #[test]
    fn zero_row_is_host_only_run() {
        let p = builtin_profile("recommender").unwrap();
        let cluster = ClusterConfig::new(36).unwrap();
        let cfg = SchedulerConfig::new(50, 22.0);
        let rows = sweep(&cluster, &p, &cfg, &[50], &[0]).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].report, host_only(&cluster, &p, &cfg).unwrap());
        assert!((rows[0].report.throughput - 579.0).abs() < 1e-6);
    }

    #[test]
    fn empty_axes_rejected() {
        let p = builtin_profile("recommender").unwrap();
        let cluster = ClusterConfig::new(4).unwrap();
        let cfg = SchedulerConfig::new(50, 22.0);
        assert!(sweep(&cluster, &p, &cfg, &[], &[1]).is_err());
        assert!(sweep(&cluster, &p, &cfg, &[1], &[]).is_err());
    }

    #[test]
    fn cell_errors_name_the_cell() {
        let p = builtin_profile("recommender").unwrap();
        let cluster = ClusterConfig::new(4).unwrap();
        let cfg = SchedulerConfig::new(50, 22.0);
        match sweep(&cluster, &p, &cfg, &[50, 0], &[2]) {
            Err(Error::SweepCell { batch: 0, csds: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        match sweep(&cluster, &p, &cfg, &[50], &[99]) {
            Err(Error::SweepCell { batch: 50, csds: 99, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_header_and_row_order() {
        let p = builtin_profile("speech_to_text").unwrap().with_total_items(2000);
        let cluster = ClusterConfig::new(36).unwrap();
        let rows = sweep(&cluster, &p, &SchedulerConfig::new(6, 20.0), &[2, 6], &[0, 4]).unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], SWEEP_CSV_HEADER);
        assert_eq!(lines.len(), 5);
        let keys: Vec<(&str, &str)> = lines[1..]
            .iter()
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                (f[1], f[2])
            })
            .collect();
        assert_eq!(keys, vec![("0", "2"), ("4", "2"), ("0", "6"), ("4", "6")]);
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn parallel_matches_sequential() {
        let p = builtin_profile("speech_to_text").unwrap().with_total_items(5000);
        let cluster = ClusterConfig::new(36).unwrap();
        let cfg = SchedulerConfig::new(6, 20.0);
        let a = sweep_parallel(&cluster, &p, &cfg, &[2, 4, 6, 8], &[0, 1, 12, 36]).unwrap();
        let b = sweep_sequential(&cluster, &p, &cfg, &[2, 4, 6, 8], &[0, 1, 12, 36]).unwrap();
        assert_eq!(a, b);
    }
}
