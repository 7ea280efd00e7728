//! Cluster description: node inventory, data-path bandwidths, power model.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Node identifier. The host is always `0`; CSDs are numbered from `1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    pub const HOST: NodeId = NodeId(0);

    pub fn csd(index: u32) -> NodeId {
        NodeId(index)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 == 0 {
            f.write_str("host")
        } else {
            write!(f, "csd{}", self.0)
        }
    }
}

impl FromStr for NodeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "host" {
            return Ok(NodeId::HOST);
        }
        s.strip_prefix("csd")
            .and_then(|n| n.parse::<u32>().ok())
            .filter(|&n| n > 0)
            .map(NodeId)
            .ok_or_else(|| Error::InvalidArgument(format!("bad node id `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Host,
    Csd,
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeKind::Host => "host",
            NodeKind::Csd => "csd",
        })
    }
}

impl FromStr for NodeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "host" => Ok(NodeKind::Host),
            "csd" => Ok(NodeKind::Csd),
            other => Err(Error::InvalidArgument(format!("bad node kind `{other}`"))),
        }
    }
}

/// One node. The rate table that applies is selected by `kind`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: NodeId,
    pub kind: NodeKind,
}

/// Bandwidths of the three data paths, in bytes/sec.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataPathSpec {
    /// Flash to host over NVMe/PCIe.
    pub nvme_host_bandwidth: f64,
    /// Drive processor to host over the TCP/IP-over-NVMe tunnel.
    pub tunnel_bandwidth: f64,
    /// Flash to the drive's own processor.
    pub isp_internal_bandwidth: f64,
}

impl Default for DataPathSpec {
    fn default() -> Self {
        Self {
            nvme_host_bandwidth: 3.2e9,
            tunnel_bandwidth: 100e6,
            isp_internal_bandwidth: 3.2e9,
        }
    }
}

impl DataPathSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("nvme_host_bandwidth", self.nvme_host_bandwidth),
            ("tunnel_bandwidth", self.tunnel_bandwidth),
            ("isp_internal_bandwidth", self.isp_internal_bandwidth),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidCluster(format!("paths.{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Whole-server wall power, decomposed into a base, a per-drive idle share
/// and a per-enabled-ISP-engine increment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerModel {
    /// Server idle without storage drives.
    pub idle_base_w: f64,
    pub idle_per_csd_w: f64,
    /// Whole server under benchmark load with every ISP engine disabled.
    pub active_total_no_isp_w: f64,
    pub active_per_isp_w: f64,
    /// Drive count of the measurement configuration.
    pub num_csds_reference: u32,
}

impl Default for PowerModel {
    fn default() -> Self {
        PowerMeasurements::default()
            .into_model()
            .expect("reference measurements are consistent")
    }
}

impl PowerModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("idle_base_w", self.idle_base_w),
            ("idle_per_csd_w", self.idle_per_csd_w),
            ("active_total_no_isp_w", self.active_total_no_isp_w),
            ("active_per_isp_w", self.active_per_isp_w),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidPowerModel(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.active_total_no_isp_w <= self.idle_base_w {
            return Err(Error::InvalidPowerModel(format!(
                "active_total_no_isp_w ({}) must exceed idle_base_w ({})",
                self.active_total_no_isp_w, self.idle_base_w
            )));
        }
        Ok(())
    }

    pub fn idle_with_drives_w(&self) -> f64 {
        self.idle_base_w + f64::from(self.num_csds_reference) * self.idle_per_csd_w
    }

    pub fn active_with_all_isp_w(&self) -> f64 {
        self.active_total_no_isp_w + f64::from(self.num_csds_reference) * self.active_per_isp_w
    }

    /// Per-drive idle power recovered from the model's whole-server totals.
    pub fn derive_per_csd_idle(&self) -> Result<f64> {
        per_unit(self.idle_with_drives_w(), self.idle_base_w, self.num_csds_reference)
    }

    /// Per-engine ISP increment recovered from the model's whole-server totals.
    pub fn derive_per_isp_active(&self) -> Result<f64> {
        per_unit(
            self.active_with_all_isp_w(),
            self.active_total_no_isp_w,
            self.num_csds_reference,
        )
    }
}

fn per_unit(with: f64, without: f64, count: u32) -> Result<f64> {
    if count == 0 {
        return Err(Error::InvalidPowerModel(
            "num_csds_reference must be > 0 to derive per-drive power".into(),
        ));
    }
    Ok((with - without) / f64::from(count))
}

/// Whole-server wall-meter readings from which a [`PowerModel`] is built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerMeasurements {
    pub idle_base_w: f64,
    pub idle_with_csds_w: f64,
    pub active_no_isp_w: f64,
    pub active_with_isp_w: f64,
    pub num_csds: u32,
}

impl Default for PowerMeasurements {
    /// 1U server with 36 E1.S drives.
    fn default() -> Self {
        Self {
            idle_base_w: 167.0,
            idle_with_csds_w: 405.0,
            active_no_isp_w: 482.0,
            active_with_isp_w: 492.0,
            num_csds: 36,
        }
    }
}

impl PowerMeasurements {
    pub fn derive_per_csd_idle(&self) -> Result<f64> {
        per_unit(self.idle_with_csds_w, self.idle_base_w, self.num_csds)
    }

    pub fn derive_per_isp_active(&self) -> Result<f64> {
        per_unit(self.active_with_isp_w, self.active_no_isp_w, self.num_csds)
    }

    pub fn into_model(self) -> Result<PowerModel> {
        let model = PowerModel {
            idle_base_w: self.idle_base_w,
            idle_per_csd_w: self.derive_per_csd_idle()?,
            active_total_no_isp_w: self.active_no_isp_w,
            active_per_isp_w: self.derive_per_isp_active()?,
            num_csds_reference: self.num_csds,
        };
        model.validate()?;
        Ok(model)
    }
}

pub const DEFAULT_MAX_CSDS: usize = 36;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterConfig {
    nodes: Vec<NodeSpec>,
    pub paths: DataPathSpec,
    pub power: PowerModel,
    pub max_csds: usize,
}

impl ClusterConfig {
    /// One host plus `csd_count` drives with default paths and power.
    pub fn new(csd_count: usize) -> Result<Self> {
        Self::with_parts(csd_count, DataPathSpec::default(), PowerModel::default(), DEFAULT_MAX_CSDS)
    }

    pub fn with_parts(
        csd_count: usize,
        paths: DataPathSpec,
        power: PowerModel,
        max_csds: usize,
    ) -> Result<Self> {
        let mut nodes = Vec::with_capacity(csd_count + 1);
        nodes.push(NodeSpec { id: NodeId::HOST, kind: NodeKind::Host });
        nodes.extend((1..=csd_count as u32).map(|i| NodeSpec { id: NodeId::csd(i), kind: NodeKind::Csd }));
        Self::from_nodes(nodes, paths, power, max_csds)
    }

    /// Builds a cluster from an explicit node list, normalizing the order to
    /// host first, then CSDs by id.
    pub fn from_nodes(
        mut nodes: Vec<NodeSpec>,
        paths: DataPathSpec,
        power: PowerModel,
        max_csds: usize,
    ) -> Result<Self> {
        let hosts: Vec<_> = nodes.iter().filter(|n| n.kind == NodeKind::Host).collect();
        match hosts.len() {
            1 => {}
            0 => return Err(Error::InvalidCluster("cluster has no host node".into())),
            n => return Err(Error::InvalidCluster(format!("cluster has {n} host nodes, expected 1"))),
        }
        let mut seen = HashSet::new();
        for n in &nodes {
            if !seen.insert(n.id) {
                return Err(Error::InvalidCluster(format!("duplicate node id {}", n.id)));
            }
            if (n.kind == NodeKind::Host) != (n.id == NodeId::HOST) {
                return Err(Error::InvalidCluster(format!(
                    "node id {} does not match kind {}",
                    n.id, n.kind
                )));
            }
        }
        let csds = nodes.len() - 1;
        if csds > max_csds {
            return Err(Error::InvalidCluster(format!(
                "{csds} CSDs exceeds the configured ceiling of {max_csds}"
            )));
        }
        paths.validate()?;
        power.validate()?;
        nodes.sort_by_key(|n| n.id);
        Ok(Self { nodes, paths, power, max_csds })
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn csd_count(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn kind_of(&self, id: NodeId) -> Option<NodeKind> {
        self.nodes.iter().find(|n| n.id == id).map(|n| n.kind)
    }

    /// Same paths and power, different number of drives.
    pub fn with_csd_count(&self, csd_count: usize) -> Result<Self> {
        Self::with_parts(csd_count, self.paths, self.power, self.max_csds)
    }

    /// Parses the JSON cluster document, reporting the line of the
    /// offending field for both syntax and validation errors.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ClusterFile = serde_json::from_str(text).map_err(|e| Error::Config {
            line: e.line(),
            message: e.to_string(),
        })?;
        file.into_config().map_err(|e| {
            let message = e.to_string();
            let line = locate_field(text, &message).unwrap_or(1);
            Error::Config { line, message }
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ClusterFile::from(self))?)
    }
}

/// On-disk form of [`ClusterConfig`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterFile {
    pub csd_count: usize,
    #[serde(default)]
    pub paths: DataPathSpec,
    #[serde(default)]
    pub power: PowerModel,
    #[serde(default = "default_max_csds")]
    pub max_csds: usize,
}

fn default_max_csds() -> usize {
    DEFAULT_MAX_CSDS
}

impl ClusterFile {
    pub fn into_config(self) -> Result<ClusterConfig> {
        ClusterConfig::with_parts(self.csd_count, self.paths, self.power, self.max_csds)
    }
}

impl From<&ClusterConfig> for ClusterFile {
    fn from(c: &ClusterConfig) -> Self {
        Self { csd_count: c.csd_count(), paths: c.paths, power: c.power, max_csds: c.max_csds }
    }
}

// Finds the 1-based line of the JSON key named in `message`. With a dotted
// path such as `paths.tunnel_bandwidth` the innermost key wins. "CSDs" in
// ceiling errors refers to `csd_count`.
pub(crate) fn locate_field(text: &str, message: &str) -> Option<usize> {
    let keys: Vec<(usize, &str)> =
        text.lines().enumerate().filter_map(|(i, l)| line_key(l).map(|k| (i + 1, k))).collect();
    message
        .split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .map(|w| if w == "CSDs" { "csd_count" } else { w })
        .filter_map(|w| keys.iter().find(|(_, k)| *k == w).map(|(line, _)| *line))
        .next_back()
}

// The object key declared on a JSON line, if any.
fn line_key(line: &str) -> Option<&str> {
    let rest = line.trim_start().strip_prefix('"')?;
    let (key, after) = rest.split_once('"')?;
    after.trim_start().starts_with(':').then_some(key)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn per_csd_idle_from_reference_measurements() {
        let m = PowerMeasurements::default();
        let w = m.derive_per_csd_idle().unwrap();
        assert!((w - 238.0 / 36.0).abs() < 1e-12);
        assert_eq!(format!("{w:.2}"), "6.61");
    }

    #[test]
    fn per_csd_idle_no_drives_added() {
        let m = PowerMeasurements { idle_with_csds_w: 167.0, ..Default::default() };
        assert_eq!(m.derive_per_csd_idle().unwrap(), 0.0);
    }

    #[test]
    fn per_csd_idle_arithmetic() {
        let m = PowerMeasurements { idle_base_w: 160.0, idle_with_csds_w: 300.0, num_csds: 20, ..Default::default() };
        assert_eq!(m.derive_per_csd_idle().unwrap(), 7.0);
    }

    #[test]
    fn per_isp_active_examples() {
        let m = PowerMeasurements::default();
        let w = m.derive_per_isp_active().unwrap();
        assert!((w - 10.0 / 36.0).abs() < 1e-12);
        assert_eq!(format!("{w:.3}"), "0.278");

        let off = PowerMeasurements { active_with_isp_w: 482.0, ..Default::default() };
        assert_eq!(off.derive_per_isp_active().unwrap(), 0.0);

        let m = PowerMeasurements { active_no_isp_w: 480.0, active_with_isp_w: 500.0, num_csds: 10, ..Default::default() };
        assert_eq!(m.derive_per_isp_active().unwrap(), 2.0);
    }

    #[test]
    fn zero_reference_count_is_error() {
        let m = PowerMeasurements { num_csds: 0, ..Default::default() };
        assert!(matches!(m.derive_per_csd_idle(), Err(Error::InvalidPowerModel(_))));
        assert!(matches!(m.derive_per_isp_active(), Err(Error::InvalidPowerModel(_))));
        let model = PowerModel { num_csds_reference: 0, ..Default::default() };
        assert!(model.derive_per_csd_idle().is_err());
    }

    #[test]
    fn model_identity_derivation() {
        let p = PowerModel::default();
        assert!((p.derive_per_csd_idle().unwrap() - p.idle_per_csd_w).abs() < 1e-12);
        assert!((p.derive_per_isp_active().unwrap() - p.active_per_isp_w).abs() < 1e-12);
        assert!((p.idle_with_drives_w() - 405.0).abs() < 1e-9);
        assert!((p.active_with_all_isp_w() - 492.0).abs() < 1e-9);
    }

    #[test]
    fn cluster_composition() {
        let c = ClusterConfig::new(36).unwrap();
        assert_eq!(c.csd_count(), 36);
        assert_eq!(c.nodes()[0].kind, NodeKind::Host);
        assert_eq!(c.kind_of(NodeId::csd(36)), Some(NodeKind::Csd));
        assert!(ClusterConfig::new(37).is_err());
        assert!(ClusterConfig::with_parts(40, DataPathSpec::default(), PowerModel::default(), 64).is_ok());
    }

    #[test]
    fn rejects_duplicates_and_multiple_hosts() {
        let host = NodeSpec { id: NodeId::HOST, kind: NodeKind::Host };
        let csd = NodeSpec { id: NodeId::csd(1), kind: NodeKind::Csd };
        let p = DataPathSpec::default();
        let w = PowerModel::default();
        let dup = ClusterConfig::from_nodes(vec![host, csd, csd], p, w, 36).unwrap_err();
        assert!(dup.to_string().contains("duplicate node id csd1"));
        let two = ClusterConfig::from_nodes(vec![host, host], p, w, 36).unwrap_err();
        assert!(two.to_string().contains("2 host nodes"));
        let none = ClusterConfig::from_nodes(vec![csd], p, w, 36).unwrap_err();
        assert!(none.to_string().contains("no host"));
    }

    #[test]
    fn node_id_round_trip() {
        for s in ["host", "csd1", "csd36"] {
            assert_eq!(s.parse::<NodeId>().unwrap().to_string(), s);
        }
        assert!("csd0".parse::<NodeId>().is_err());
        assert!("gpu1".parse::<NodeId>().is_err());
    }

    #[test]
    fn json_validation_reports_line() {
        let text = "{\n  \"csd_count\": 4,\n  \"paths\": {\n    \"nvme_host_bandwidth\": 3.2e9,\n    \"tunnel_bandwidth\": 0,\n    \"isp_internal_bandwidth\": 3.2e9\n  }\n}\n";
        match ClusterConfig::from_json(text) {
            Err(Error::Config { line, message }) => {
                assert_eq!(line, 5);
                assert!(message.contains("tunnel_bandwidth"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let syntax = "{\n  \"csd_count\": 4,\n  \"paths\": oops\n}";
        assert!(matches!(ClusterConfig::from_json(syntax), Err(Error::Config { line: 3, .. })));
        let too_many = "{\n  \"csd_count\": 40\n}";
        assert!(matches!(ClusterConfig::from_json(too_many), Err(Error::Config { line: 2, .. })));
    }

    #[test]
    fn json_round_trip() {
        let c = ClusterConfig::new(12).unwrap();
        assert_eq!(ClusterConfig::from_json(&c.to_json().unwrap()).unwrap(), c);
    }
}
