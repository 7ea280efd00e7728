//! Data-movement accounting across the three data paths.
//!
//! Host-processed items are read from flash over NVMe. CSD-processed items
//! never leave the drive; only their outputs cross the tunnel. Outputs of
//! host-processed items are produced in host memory and move nowhere.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::{DataPathSpec, NodeKind};
use crate::workload::WorkloadProfile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    /// Flash to host over NVMe, for host-processed items.
    pub bytes_input_to_host: f64,
    /// Inputs processed in-storage.
    pub bytes_retained_in_csd: f64,
    /// Outputs produced by all nodes.
    pub bytes_output_total: f64,
    /// Outputs of CSD-processed items, shipped over the tunnel.
    pub bytes_output_to_host: f64,
    pub io_reduction_ratio: f64,
}

impl TransferReport {
    /// Everything that crossed into the host: host inputs plus tunnelled outputs.
    pub fn bytes_to_host(&self) -> f64 {
        self.bytes_input_to_host + self.bytes_output_to_host
    }
}

/// Splits the workload's bytes by where each item was processed.
pub fn account(profile: &WorkloadProfile, per_node_items: &[(NodeKind, u64)]) -> Result<TransferReport> {
    let total: u64 = per_node_items.iter().map(|(_, n)| n).sum();
    if total != profile.total_items {
        return Err(Error::Accounting(format!(
            "per-node items sum to {total}, profile has {}",
            profile.total_items
        )));
    }
    let (host, csd) = per_node_items.iter().fold((0u64, 0u64), |(h, c), &(kind, n)| match kind {
        NodeKind::Host => (h + n, c),
        NodeKind::Csd => (h, c + n),
    });
    let input = profile.avg_input_bytes_per_item();
    let output = profile.avg_output_bytes_per_item;
    let retained = csd as f64 * input;
    Ok(TransferReport {
        bytes_input_to_host: host as f64 * input,
        bytes_retained_in_csd: retained,
        bytes_output_total: total as f64 * output,
        bytes_output_to_host: csd as f64 * output,
        io_reduction_ratio: if profile.dataset_input_bytes == 0 {
            0.0
        } else {
            retained / profile.dataset_input_bytes as f64
        },
    })
}

/// In-storage fraction from a paired pair of throughputs: `(with - host) / with`.
pub fn csd_fraction_paired(throughput_with: f64, throughput_host_only: f64) -> Result<f64> {
    if !(throughput_host_only > 0.0 && throughput_with >= throughput_host_only) {
        return Err(Error::InvalidArgument(format!(
            "need throughput_with ({throughput_with}) >= throughput_host_only ({throughput_host_only}) > 0"
        )));
    }
    Ok((throughput_with - throughput_host_only) / throughput_with)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataPath {
    NvmeHost,
    Tunnel,
    IspInternal,
}

/// Average load a run placed on one data path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLoad {
    pub path: DataPath,
    pub bytes_per_sec: f64,
    pub capacity: f64,
    pub saturated: bool,
}

/// Post-hoc bandwidth check. Rates do not feed back into node speeds; the
/// per-node rates are end-to-end measurements that already include IO.
/// The internal path is checked per drive (each drive has its own).
pub fn path_loads(
    report: &TransferReport,
    paths: &DataPathSpec,
    makespan: f64,
    csd_count: usize,
) -> Vec<PathLoad> {
    if makespan <= 0.0 {
        return Vec::new();
    }
    let per_drive = if csd_count == 0 { 0.0 } else { report.bytes_retained_in_csd / csd_count as f64 };
    [
        (DataPath::NvmeHost, report.bytes_input_to_host, paths.nvme_host_bandwidth),
        (DataPath::Tunnel, report.bytes_output_to_host, paths.tunnel_bandwidth),
        (DataPath::IspInternal, per_drive, paths.isp_internal_bandwidth),
    ]
    .into_iter()
    .map(|(path, bytes, capacity)| {
        let bytes_per_sec = bytes / makespan;
        PathLoad { path, bytes_per_sec, capacity, saturated: bytes_per_sec > capacity }
    })
    .collect()
}
