//! Discrete-event simulation of the network with explicit device geometry
//! and pluggable cache replacement.

mod cache_policy;
mod engine;
mod stats;
mod topology;

pub use cache_policy::{apply_cache_policy, Admission, ContentStore, Entry, PolicyKind, UnknownPolicy};
pub use engine::SimOptions;
pub use stats::{empirical_metrics, mean_ci95, summarize, D2dProbe, ModeCounts, SimError, SimStats, Summary};
pub use topology::Topology;

use crate::params::SystemParams;
use rayon::prelude::*;

/// Simulates `horizon` seconds; the first `warmup_fraction` of it is not
/// observed. Deterministic in `(params, policy, seed, horizon)`.
pub fn run_replication(params: &SystemParams, policy: PolicyKind, seed: u64, horizon: f64) -> SimStats {
    run_replication_with(params, policy, seed, horizon, SimOptions::default())
}

pub fn run_replication_with(
    params: &SystemParams,
    policy: PolicyKind,
    seed: u64,
    horizon: f64,
    options: SimOptions,
) -> SimStats {
    engine::Engine::new(params, policy, seed, horizon, options).run()
}

/// Seed of replication `index` derived from `base` (SplitMix64 step).
pub fn replication_seed(base: u64, index: usize) -> u64 {
    let mut z = base.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent replications run in parallel, returned in index order.
pub fn run_replications(
    params: &SystemParams,
    policy: PolicyKind,
    base_seed: u64,
    replications: usize,
    horizon: f64,
) -> Vec<SimStats> {
    (0..replications)
        .into_par_iter()
        .map(|r| run_replication(params, policy, replication_seed(base_seed, r), horizon))
        .collect()
}
