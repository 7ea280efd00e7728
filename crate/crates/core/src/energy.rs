//! Whole-server energy per item from wall power and throughput.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::PowerModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub wall_power_w: f64,
    pub energy_per_item_mj: f64,
    /// Energy per item relative to the host-only configuration.
    pub normalized_to_host_only: f64,
    pub savings_percent: f64,
    /// Set when the power figure interpolates between the two measured
    /// configurations (0 and all engines enabled).
    pub extrapolated: bool,
}

/// Wall power under load with `active_isp_count` engines enabled.
pub fn wall_power(power: &PowerModel, active_isp_count: u32) -> Result<f64> {
    if active_isp_count > power.num_csds_reference {
        return Err(Error::InvalidArgument(format!(
            "{active_isp_count} ISP engines exceeds the {} of the power model",
            power.num_csds_reference
        )));
    }
    Ok(power.active_total_no_isp_w + f64::from(active_isp_count) * power.active_per_isp_w)
}

pub fn energy_per_item(power_w: f64, throughput: f64) -> Result<f64> {
    if throughput.is_nan() || throughput <= 0.0 {
        return Err(Error::InvalidArgument(format!("throughput must be > 0, got {throughput}")));
    }
    Ok(power_w / throughput * 1000.0)
}

/// Percent energy saved per item relative to the host-only figure.
pub fn savings(host_only_mj: f64, with_csd_mj: f64) -> f64 {
    (1.0 - with_csd_mj / host_only_mj) * 100.0
}

/// Energy report for a run of `throughput` with `csd_count` ISP engines
/// enabled, normalized against a host-only run of `baseline_throughput`
/// (all engines disabled).
pub fn report(
    power: &PowerModel,
    csd_count: u32,
    throughput: f64,
    baseline_throughput: f64,
) -> Result<EnergyReport> {
    let wall_power_w = wall_power(power, csd_count)?;
    let energy_per_item_mj = energy_per_item(wall_power_w, throughput)?;
    let baseline_mj = energy_per_item(wall_power(power, 0)?, baseline_throughput)?;
    let normalized = energy_per_item_mj / baseline_mj;
    Ok(EnergyReport {
        wall_power_w,
        energy_per_item_mj,
        normalized_to_host_only: normalized,
        savings_percent: (1.0 - normalized) * 100.0,
        extrapolated: csd_count != 0 && csd_count != power.num_csds_reference,
    })
}
