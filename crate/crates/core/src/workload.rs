//! Benchmark workload profiles and per-node-class rate tables.
//!
//! A profile describes a closed workload: a fixed number of homogeneous
//! items resident on flash, their average input and output sizes, and how
//! fast each node class processes them as a function of batch size.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Processing rate (items/sec) as a function of batch size.
///
/// Serialized as a list of `[batch, rate]` pairs. Lookup interpolates
/// linearly in `(ln batch, rate)` space and clamps beyond the end knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(u64, f64)>", into = "Vec<(u64, f64)>")]
pub struct RateTable {
    entries: Vec<(u64, f64)>,
}

impl RateTable {
    pub fn new(entries: Vec<(u64, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidRateTable("table has no entries".into()));
        }
        for (i, &(batch, rate)) in entries.iter().enumerate() {
            if batch == 0 {
                return Err(Error::InvalidRateTable(format!(
                    "entry {i}: batch size must be >= 1"
                )));
            }
            if !(rate.is_finite() && rate > 0.0) {
                return Err(Error::InvalidRateTable(format!(
                    "entry {i}: rate {rate} must be a positive finite number"
                )));
            }
            if i > 0 && entries[i - 1].0 >= batch {
                return Err(Error::InvalidRateTable(format!(
                    "entry {i}: batch sizes must be strictly increasing ({} then {batch})",
                    entries[i - 1].0
                )));
            }
        }
        Ok(Self { entries })
    }

    /// A batch-size-independent table.
    pub fn flat(rate: f64) -> Result<Self> {
        Self::new(vec![(1, rate)])
    }

    pub fn entries(&self) -> &[(u64, f64)] {
        &self.entries
    }

    /// Items/sec at `batch_size`. A zero batch size is treated as 1.
    pub fn lookup(&self, batch_size: u64) -> f64 {
        let batch = batch_size.max(1);
        let first = self.entries[0];
        let last = self.entries[self.entries.len() - 1];
        if batch <= first.0 {
            return first.1;
        }
        if batch >= last.0 {
            return last.1;
        }
        // first.0 < batch < last.0, so a bracketing pair exists.
        let upper = self.entries.partition_point(|&(b, _)| b <= batch);
        let (b0, r0) = self.entries[upper - 1];
        if b0 == batch {
            return r0;
        }
        let (b1, r1) = self.entries[upper];
        let (x0, x1, x) = ((b0 as f64).ln(), (b1 as f64).ln(), (batch as f64).ln());
        r0 + (x - x0) / (x1 - x0) * (r1 - r0)
    }
}

impl TryFrom<Vec<(u64, f64)>> for RateTable {
    type Error = Error;

    fn try_from(entries: Vec<(u64, f64)>) -> Result<Self> {
        Self::new(entries)
    }
}

impl From<RateTable> for Vec<(u64, f64)> {
    fn from(table: RateTable) -> Self {
        table.entries
    }
}

/// A benchmark's item counts, byte sizes and per-node-class rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadProfile {
    pub name: String,
    pub total_items: u64,
    pub dataset_input_bytes: u64,
    pub avg_output_bytes_per_item: f64,
    pub host_rates: RateTable,
    pub csd_rates: RateTable,
    /// Measured end-to-end rate of the host running alone, when it differs
    /// from the host's single-node micro-benchmark rate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub host_only_rate: Option<f64>,
}

pub const BUILTIN_PROFILES: [&str; 3] = ["speech_to_text", "recommender", "sentiment"];

impl WorkloadProfile {
    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::InvalidProfile("name must not be empty".into()));
        }
        if self.name.chars().any(char::is_whitespace) {
            return Err(Error::InvalidProfile(format!(
                "name `{}` must not contain whitespace",
                self.name
            )));
        }
        if self.total_items == 0 {
            return Err(Error::InvalidProfile("total_items must be > 0".into()));
        }
        if !(self.avg_output_bytes_per_item.is_finite() && self.avg_output_bytes_per_item >= 0.0) {
            return Err(Error::InvalidProfile(
                "avg_output_bytes_per_item must be a finite number >= 0".into(),
            ));
        }
        if let Some(rate) = self.host_only_rate {
            if !(rate.is_finite() && rate > 0.0) {
                return Err(Error::InvalidProfile(format!(
                    "host_only_rate {rate} must be positive"
                )));
            }
        }
        Ok(())
    }

    pub fn avg_input_bytes_per_item(&self) -> f64 {
        self.dataset_input_bytes as f64 / self.total_items as f64
    }

    pub fn total_output_bytes(&self) -> f64 {
        self.avg_output_bytes_per_item * self.total_items as f64
    }

    /// Host rate used for host-only baseline runs.
    pub fn baseline_host_rate(&self) -> f64 {
        self.host_only_rate
            .unwrap_or_else(|| self.host_rates.lookup(self.total_items))
    }

    /// Same profile with a different item count. Dataset bytes scale so the
    /// per-item input size is preserved.
    pub fn with_total_items(&self, total_items: u64) -> Self {
        let per_item = self.avg_input_bytes_per_item();
        Self {
            total_items,
            dataset_input_bytes: (per_item * total_items as f64).round() as u64,
            ..self.clone()
        }
    }

    /// Same profile with every rate divided by `factor`.
    pub fn scaled_rates(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "rate scale factor {factor} must be positive"
            )));
        }
        let scale = |t: &RateTable| {
            RateTable::new(t.entries().iter().map(|&(b, r)| (b, r / factor)).collect())
        };
        Ok(Self {
            host_rates: scale(&self.host_rates)?,
            csd_rates: scale(&self.csd_rates)?,
            host_only_rate: self.host_only_rate.map(|r| r / factor),
            ..self.clone()
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let profile: Self = serde_json::from_str(text)?;
        profile.validate()?;
        Ok(profile)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Pre-filled profiles for the three NLP benchmarks.
///
/// Published values: item counts, dataset size and total output of the
/// speech workload, single-node host/CSD rates, host-only end-to-end rates.
/// Calibrated defaults (free parameters): the recommender CSD rate (solved
/// from the 36-drive aggregate), dataset bytes for recommender and
/// sentiment, 100 output bytes/item for recommender and sentiment, and the
/// shape of the sentiment rate curves below their best batch size.
pub fn builtin_profile(name: &str) -> Result<WorkloadProfile> {
    let profile = match name {
        "speech_to_text" => WorkloadProfile {
            name: name.into(),
            total_items: 225_715,
            dataset_input_bytes: 3_800_000_000,
            avg_output_bytes_per_item: 1_200_000.0 / 225_715.0,
            host_rates: RateTable::flat(102.0)?,
            csd_rates: RateTable::flat(5.3)?,
            host_only_rate: Some(96.0),
        },
        "recommender" => WorkloadProfile {
            name: name.into(),
            total_items: 58_000,
            // one 4 KiB metadata/similarity record per title
            dataset_input_bytes: 58_000 * 4096,
            avg_output_bytes_per_item: 100.0,
            host_rates: RateTable::flat(579.0)?,
            // aggregate 1506 q/s with 36 drives on top of a 579 q/s host
            csd_rates: RateTable::flat((1506.0 - 579.0) / 36.0)?,
            host_only_rate: Some(579.0),
        },
        "sentiment" => WorkloadProfile {
            name: name.into(),
            total_items: 8_000_000,
            dataset_input_bytes: 8_000_000 * 128,
            avg_output_bytes_per_item: 100.0,
            host_rates: RateTable::new(vec![
                (100, 2_500.0),
                (1_000, 5_200.0),
                (10_000, 8_000.0),
                (100_000, 9_496.0),
            ])?,
            csd_rates: RateTable::new(vec![
                (100, 120.0),
                (1_000, 210.0),
                (10_000, 300.0),
                (40_000, 364.0),
            ])?,
            host_only_rate: Some(9_496.0),
        },
        other => return Err(Error::UnknownProfile(other.to_string())),
    };
    Ok(profile)
}
