//! Exact evaluation engines for small instances.
//!
//! * [`exact_policy_marginals`]: forward DP over the set of occupied bins
//!   giving the rounding policy's exact match, vacancy and covariance
//!   numbers.
//! * [`opt_online`]: backward DP for the best online policy.
//! * [`opt_offline`]: expected max-weight matching over all arrival
//!   profiles.

mod offline;
mod online;
mod state_dp;

pub use offline::{opt_offline, opt_offline_estimate, opt_offline_or_estimate, OfflineValue};
pub use online::{opt_online, opt_online_marginals, OnlineMarginals, OnlinePolicy};
pub use state_dp::{exact_policy_marginals, policy_state_distributions, OracleResult, StateDistribution};

use crate::error::{Error, Result};

pub const DEFAULT_MAX_BINS: usize = 20;
pub const DEFAULT_MAX_PROFILES: u64 = 1 << 20;

/// Size limits for the exponential oracles.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleCaps {
    pub max_bins: usize,
    pub max_profiles: u64,
}

impl Default for OracleCaps {
    fn default() -> Self {
        OracleCaps {
            max_bins: DEFAULT_MAX_BINS,
            max_profiles: DEFAULT_MAX_PROFILES,
        }
    }
}

impl OracleCaps {
    pub(crate) fn check_bins(&self, num_bins: usize) -> Result<()> {
        // Masks are u32 indices into dense tables.
        let limit = self.max_bins.min(30);
        if num_bins > limit {
            return Err(Error::CapExceeded {
                what: "number of bins",
                limit: limit as u64,
                actual: num_bins as u64,
            });
        }
        Ok(())
    }
}
