//! The published artifact: disjoint regions with noisy counts.

use std::time::{SystemTime, UNIX_EPOCH};

use crate::error::Result;
use crate::matrix::{check_disjoint_cover, Region};
use crate::mechanism::{BudgetLedger, LedgerSummary};

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub region: Region,
    pub noisy_count: f64,
    /// Cell volume of `region`.
    pub volume: u128,
}

impl Partition {
    pub fn new(region: Region, noisy_count: f64) -> Self {
        let volume = region.volume();
        Self {
            region,
            noisy_count,
            volume,
        }
    }
}

/// Provenance of a sanitized matrix.
///
/// Everything except `timestamp` and `runtime_ms` is a deterministic
/// function of the input matrix, the configuration and the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Metadata {
    pub method: String,
    pub epsilon: f64,
    pub seed: u64,
    /// Method-specific settings and derived values, in emission order.
    pub params: Vec<(String, String)>,
    pub warnings: Vec<String>,
    pub ledger: LedgerSummary,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub runtime_ms: Option<f64>,
}

impl Metadata {
    pub fn new(method: &str, epsilon: f64, seed: u64, ledger: LedgerSummary) -> Self {
        Self {
            method: method.to_string(),
            epsilon,
            seed,
            params: Vec::new(),
            warnings: Vec::new(),
            ledger,
            timestamp: unix_now(),
            runtime_ms: None,
        }
    }

    pub fn param(mut self, key: &str, value: impl ToString) -> Self {
        self.params.push((key.to_string(), value.to_string()));
        self
    }

    pub fn get_param(&self, key: &str) -> Option<&str> {
        self.params
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

pub(crate) fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SanitizedMatrix {
    pub extents: Vec<u32>,
    pub partitions: Vec<Partition>,
    pub metadata: Metadata,
    /// Full ledger dump of the run that produced this matrix. Not part of
    /// the published file; `None` after reading one back.
    pub ledger_dump: Option<String>,
}

impl SanitizedMatrix {
    pub(crate) fn from_run(
        extents: &[u32],
        partitions: Vec<Partition>,
        metadata: Metadata,
        ledger: &BudgetLedger,
    ) -> Self {
        Self {
            extents: extents.to_vec(),
            partitions,
            metadata,
            ledger_dump: Some(ledger.dump()),
        }
    }

    pub fn len(&self) -> usize {
        self.partitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partitions.is_empty()
    }

    /// Sum of all published counts.
    pub fn noisy_total(&self) -> f64 {
        self.partitions.iter().map(|p| p.noisy_count).sum()
    }

    pub fn regions(&self) -> impl Iterator<Item = &Region> {
        self.partitions.iter().map(|p| &p.region)
    }

    /// Checks that the partitions are a disjoint cover of the domain and
    /// that the recorded budget audit passed.
    pub fn validate(&self) -> Result<()> {
        let regions: Vec<Region> = self.regions().cloned().collect();
        check_disjoint_cover(&self.extents, &regions)?;
        for p in &self.partitions {
            if p.volume != p.region.volume() {
                return Err(crate::Error::InvalidPartition(format!(
                    "partition {} records volume {} but has {}",
                    p.region,
                    p.volume,
                    p.region.volume()
                )));
            }
        }
        if !self.metadata.ledger.within() {
            return Err(crate::Error::AuditFailed {
                spent: self.metadata.ledger.spent,
                total: self.metadata.ledger.total,
                dump: self.ledger_dump.clone().unwrap_or_default(),
            });
        }
        Ok(())
    }
}
