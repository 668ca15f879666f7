//! Build and query tunables.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("k_nn ({k_nn}) must be at least ceil(k/2) = {min} for k = {k}")]
    DirectSlotsTooFew { k: usize, k_nn: usize, min: usize },
    #[error("k_nn ({k_nn}) + k_sym ({k_sym}) must equal k ({k})")]
    SlotSplit { k: usize, k_nn: usize, k_sym: usize },
    #[error("segment size s ({s}) must be at least k_nn + 1 = {}", k_nn + 1)]
    SegmentTooSmall { s: usize, k_nn: usize },
    #[error("branching factor g ({0}) must be at least 2")]
    Branching(usize),
    #[error("parameter {name:?} invalid: {reason}")]
    Invalid { name: &'static str, reason: String },
}

/// Index construction parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    /// Total out-degree per node.
    pub k: usize,
    /// Direct nearest-neighbor slots.
    pub k_nn: usize,
    /// Inverse-link slots.
    pub k_sym: usize,
    /// Segment / batch size.
    pub s: usize,
    /// Branching factor: sub-trees merged per level.
    pub g: usize,
    /// Refinement passes per layer and merge.
    pub refinements: usize,
    /// Slack used by construction-time queries.
    pub tau_build: f32,
    pub seed: u64,
    /// Expansion budget of each symmetrization path check.
    pub sym_check_budget: usize,
    /// Bottom-layer nodes sampled for the per-pass C@k estimate in
    /// [`BuildStats`](crate::build::BuildStats); 0 disables it.
    pub consensus_sample: usize,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            k: 24,
            k_nn: 12,
            k_sym: 12,
            s: 32,
            g: 4,
            refinements: 2,
            tau_build: 0.5,
            seed: 1,
            sym_check_budget: 16,
            consensus_sample: 0,
        }
    }
}

impl BuildConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let min = self.k.div_ceil(2);
        if self.k_nn + self.k_sym != self.k {
            return Err(ConfigError::SlotSplit {
                k: self.k,
                k_nn: self.k_nn,
                k_sym: self.k_sym,
            });
        }
        if self.k_nn == 0 || self.k_nn < min {
            return Err(ConfigError::DirectSlotsTooFew {
                k: self.k,
                k_nn: self.k_nn,
                min: min.max(1),
            });
        }
        if self.s < self.k_nn + 1 {
            return Err(ConfigError::SegmentTooSmall {
                s: self.s,
                k_nn: self.k_nn,
            });
        }
        if self.g < 2 {
            return Err(ConfigError::Branching(self.g));
        }
        if !(self.tau_build >= 0.0) {
            return Err(ConfigError::Invalid {
                name: "tau_build",
                reason: format!("{} is not a non-negative number", self.tau_build),
            });
        }
        if self.sym_check_budget == 0 {
            return Err(ConfigError::Invalid {
                name: "sym_check_budget",
                reason: "must be >= 1".into(),
            });
        }
        Ok(())
    }

    /// Query settings used by merge and refinement passes.
    pub(crate) fn merge_query(&self) -> QueryConfig {
        QueryConfig {
            k_out: self.k_nn,
            tau: self.tau_build,
            ..QueryConfig::default()
        }
    }
}

/// Query parameters and search-cache geometry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryConfig {
    pub k_out: usize,
    pub tau: f32,
    pub max_iterations: usize,
    pub prioq_size: usize,
    pub visited_size: usize,
}

impl Default for QueryConfig {
    fn default() -> Self {
        Self {
            k_out: 10,
            tau: 0.6,
            max_iterations: 4096,
            prioq_size: 256,
            visited_size: 512,
        }
    }
}

impl QueryConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |name, reason: String| Err(ConfigError::Invalid { name, reason });
        if self.k_out == 0 {
            return bad("k_out", "must be >= 1".into());
        }
        if self.prioq_size < 2 * self.k_out {
            return bad(
                "prioq_size",
                format!("{} < 2 * k_out = {}", self.prioq_size, 2 * self.k_out),
            );
        }
        if self.max_iterations == 0 {
            return bad("max_iterations", "must be >= 1".into());
        }
        if self.visited_size == 0 {
            return bad("visited_size", "must be >= 1".into());
        }
        if !(self.tau >= 0.0) {
            return bad("tau", format!("{} is not a non-negative number", self.tau));
        }
        Ok(())
    }
}
