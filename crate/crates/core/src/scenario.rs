//! JSON scenario files: a workload, a cluster, a scheduler configuration and
//! optional sweep axes in one document.
//!
//! ```json
//! {
//!   "profile": "speech_to_text",
//!   "cluster": { "csd_count": 36 },
//!   "scheduler": { "csd_batch_size": 6, "batch_ratio": 20 },
//!   "sweep": { "batch_sizes": [2, 4, 6, 8], "csd_counts": [0, 12, 36] }
//! }
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scheduler::SchedulerConfig;
use crate::topology::{locate_field, ClusterConfig, ClusterFile};
use crate::workload::{builtin_profile, WorkloadProfile};

/// A builtin profile name or a full inline profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileRef {
    Builtin(String),
    Inline(WorkloadProfile),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    pub batch_sizes: Vec<u64>,
    pub csd_counts: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub profile: ProfileRef,
    /// Overrides the profile's item count; dataset bytes scale with it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_items: Option<u64>,
    /// Divides every rate in the profile.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_scale: Option<f64>,
    pub cluster: ClusterFile,
    pub scheduler: SchedulerConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepAxes>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

/// A resolved, validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub profile: WorkloadProfile,
    pub cluster: ClusterConfig,
    pub scheduler: SchedulerConfig,
    pub sweep: Option<SweepAxes>,
    pub output: Option<PathBuf>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(text)
            .map_err(|e| Error::Config { line: e.line(), message: e.to_string() })?;
        file.resolve().map_err(|e| {
            let message = e.to_string();
            let line = locate_field(text, &message).unwrap_or(1);
            Error::Config { line, message }
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// Sweep axes, required for sweep commands.
    pub fn sweep_axes(&self) -> Result<&SweepAxes> {
        match &self.sweep {
            Some(a) if !a.batch_sizes.is_empty() && !a.csd_counts.is_empty() => Ok(a),
            Some(_) => Err(Error::Config { line: 1, message: "sweep axes must be non-empty".into() }),
            None => Err(Error::Config { line: 1, message: "scenario has no `sweep` section".into() }),
        }
    }
}

impl ScenarioFile {
    pub fn resolve(self) -> Result<Scenario> {
        let mut profile = match self.profile {
            ProfileRef::Builtin(name) => builtin_profile(&name)?,
            ProfileRef::Inline(p) => {
                p.validate()?;
                p
            }
        };
        if let Some(n) = self.total_items {
            if n == 0 {
                return Err(Error::InvalidProfile("total_items must be > 0".into()));
            }
            profile = profile.with_total_items(n);
        }
        if let Some(f) = self.rate_scale {
            profile = profile
                .scaled_rates(f)
                .map_err(|_| Error::InvalidProfile(format!("rate_scale {f} must be positive")))?;
        }
        let cluster = self.cluster.into_config()?;
        self.scheduler.validate()?;
        if let Some(axes) = &self.sweep {
            if axes.batch_sizes.is_empty() || axes.csd_counts.is_empty() {
                return Err(Error::InvalidArgument("sweep batch_sizes and csd_counts must be non-empty".into()));
            }
            if let Some(&n) = axes.csd_counts.iter().find(|&&n| n > cluster.max_csds) {
                return Err(Error::InvalidCluster(format!(
                    "sweep csd_counts entry {n} exceeds max_csds {}",
                    cluster.max_csds
                )));
            }
            if axes.batch_sizes.contains(&0) {
                return Err(Error::InvalidSchedulerConfig("sweep batch_sizes entries must be >= 1".into()));
            }
        }
        Ok(Scenario { profile, cluster, scheduler: self.scheduler, sweep: self.sweep, output: self.output })
    }
}
