//! Analytic cache chains: the two-item HU device cache with TTL expiry, and
//! the fixed-slot satellite/BS caches with popularity-aware eviction.

use crate::content::{size_cdf_one, size_cdf_sum2, ContentCatalog, SizeDistribution};
use crate::solver::{solve_recurrent_class, RateMatrix, SolverError, SolverOptions};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Largest catalog the fixed-slot chains accept (subsets are stored as bit masks).
pub const MAX_FIXED_CATALOG: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LocalState {
    Empty,
    One(usize),
    /// Unordered pair stored with `a < b`.
    Two(usize, usize),
}

/// State space of the device cache holding at most two contents.
#[derive(Debug, Clone)]
pub struct LocalCacheChain {
    n_contents: usize,
    states: Vec<LocalState>,
}

impl LocalCacheChain {
    pub fn new(n_contents: usize) -> Self {
        assert!(n_contents >= 1);
        let mut states = vec![LocalState::Empty];
        states.extend((0..n_contents).map(LocalState::One));
        for a in 0..n_contents {
            for b in a + 1..n_contents {
                states.push(LocalState::Two(a, b));
            }
        }
        Self { n_contents, states }
    }

    pub fn states(&self) -> &[LocalState] {
        &self.states
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn index_of(&self, state: LocalState) -> usize {
        let n = self.n_contents;
        match state {
            LocalState::Empty => 0,
            LocalState::One(i) => 1 + i,
            LocalState::Two(a, b) => {
                let (a, b) = if a < b { (a, b) } else { (b, a) };
                // pairs (a, ·) start after all pairs with a smaller first element
                let before = a * n - a * (a + 1) / 2;
                1 + n + before + (b - a - 1)
            }
        }
    }

    /// Generator of the device cache under TTL expiry and popularity-aware
    /// eviction.
    pub fn rate_matrix(
        &self,
        catalog: &ContentCatalog,
        dist: &SizeDistribution,
        cache_capacity: f64,
        ttl_rate: f64,
    ) -> RateMatrix {
        assert_eq!(catalog.len(), self.n_contents);
        assert!(cache_capacity > 0.0 && ttl_rate > 0.0);
        let lambda = catalog.request_rate();
        let p = catalog.popularity();
        let fit_one = size_cdf_one(cache_capacity, dist);
        let fit_two = size_cdf_sum2(cache_capacity, dist);
        let n = self.n_contents;
        let mut m = RateMatrix::new(self.n_states());
        for i in 0..n {
            m.add(0, self.index_of(LocalState::One(i)), lambda[i] * fit_one);
            let single = self.index_of(LocalState::One(i));
            m.add(single, 0, ttl_rate);
            for j in 0..n {
                if j != i {
                    m.add(single, self.index_of(LocalState::Two(i, j)), lambda[j] * fit_two);
                }
            }
        }
        for (idx, &state) in self.states.iter().enumerate() {
            let LocalState::Two(i, j) = state else { continue };
            m.add(idx, self.index_of(LocalState::One(i)), ttl_rate);
            m.add(idx, self.index_of(LocalState::One(j)), ttl_rate);
            let evict_i = p[j] / (p[i] + p[j]);
            let evict_j = p[i] / (p[i] + p[j]);
            for t in 0..n {
                if t == i || t == j {
                    continue;
                }
                let rate = lambda[t] * fit_two;
                m.add(idx, self.index_of(LocalState::Two(t, j)), rate * evict_i);
                m.add(idx, self.index_of(LocalState::Two(t, i)), rate * evict_j);
            }
        }
        m
    }

    /// `p_loc[i] = p(c_i) + Σ_j p(c_i, c_j)`.
    pub fn availability(&self, pi: &[f64]) -> Vec<f64> {
        assert_eq!(pi.len(), self.n_states());
        let mut out = vec![0.0; self.n_contents];
        for (state, &mass) in self.states.iter().zip(pi) {
            match *state {
                LocalState::Empty => {}
                LocalState::One(i) => out[i] += mass,
                LocalState::Two(a, b) => {
                    out[a] += mass;
                    out[b] += mass;
                }
            }
        }
        out.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        out
    }
}

pub fn build_local_chain(
    catalog: &ContentCatalog,
    dist: &SizeDistribution,
    cache_capacity: f64,
    ttl_rate: f64,
) -> RateMatrix {
    LocalCacheChain::new(catalog.len()).rate_matrix(catalog, dist, cache_capacity, ttl_rate)
}

/// Every `slot_count`-subset of the catalog as a bit mask.
#[derive(Debug, Clone)]
pub struct FixedCacheChain {
    n_contents: usize,
    slot_count: usize,
    states: Vec<u64>,
    index: HashMap<u64, usize>,
}

impl FixedCacheChain {
    pub fn new(n_contents: usize, slot_count: usize) -> Self {
        assert!(
            n_contents <= MAX_FIXED_CATALOG,
            "fixed cache chains support at most {MAX_FIXED_CATALOG} contents"
        );
        assert!(slot_count <= n_contents, "more slots than contents");
        let mut states = Vec::new();
        let mut chosen = Vec::with_capacity(slot_count);
        subsets(n_contents, slot_count, 0, &mut chosen, &mut states);
        let index = states.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        Self {
            n_contents,
            slot_count,
            states,
            index,
        }
    }

    pub fn states(&self) -> &[u64] {
        &self.states
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn slot_count(&self) -> usize {
        self.slot_count
    }

    pub fn index_of(&self, mask: u64) -> Option<usize> {
        self.index.get(&mask).copied()
    }

    /// Generator with request rates taken from `catalog`: from subset `A`, a
    /// request for `c_t ∉ A` replaces `c_e ∈ A` at rate `λ_t · x_e / Σ x`,
    /// where `x_e` is the product of the other residents' popularities.
    pub fn rate_matrix(&self, catalog: &ContentCatalog) -> RateMatrix {
        assert_eq!(catalog.len(), self.n_contents);
        let p = catalog.popularity();
        let lambda = catalog.request_rate();
        let mut m = RateMatrix::new(self.n_states());
        let mut members = Vec::with_capacity(self.slot_count);
        let mut weights = Vec::with_capacity(self.slot_count);
        for (idx, &mask) in self.states.iter().enumerate() {
            members.clear();
            members.extend((0..self.n_contents).filter(|&c| mask >> c & 1 == 1));
            weights.clear();
            for &e in &members {
                let x: f64 = members.iter().filter(|&&o| o != e).map(|&o| p[o]).product();
                weights.push(x);
            }
            let total: f64 = weights.iter().sum();
            for t in (0..self.n_contents).filter(|&c| mask >> c & 1 == 0) {
                for (&e, &x) in members.iter().zip(&weights) {
                    let dest = (mask & !(1u64 << e)) | (1u64 << t);
                    m.add(idx, self.index[&dest], lambda[t] * x / total);
                }
            }
        }
        m
    }

    /// Stationary mass of subsets containing each content.
    pub fn availability(&self, pi: &[f64]) -> Vec<f64> {
        assert_eq!(pi.len(), self.n_states());
        let mut out = vec![0.0; self.n_contents];
        for (&mask, &mass) in self.states.iter().zip(pi) {
            for (c, v) in out.iter_mut().enumerate() {
                if mask >> c & 1 == 1 {
                    *v += mass;
                }
            }
        }
        out.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        out
    }
}

fn subsets(n: usize, k: usize, start: usize, chosen: &mut Vec<usize>, out: &mut Vec<u64>) {
    if chosen.len() == k {
        out.push(chosen.iter().fold(0u64, |m, &c| m | 1u64 << c));
        return;
    }
    let remaining = k - chosen.len();
    for c in start..=n - remaining {
        chosen.push(c);
        subsets(n, k, c + 1, chosen, out);
        chosen.pop();
    }
}

pub fn build_fixed_chain(catalog: &ContentCatalog, slot_count: usize) -> RateMatrix {
    FixedCacheChain::new(catalog.len(), slot_count).rate_matrix(catalog)
}

/// Per-content probabilities of being found in each cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvailabilityProfile {
    pub p_loc: Vec<f64>,
    pub p_sat: Vec<f64>,
    pub p_bs: Vec<f64>,
}

/// Availability of a fixed-slot cache. Catalogs no larger than the slot
/// count are held entirely; zero slots hold nothing.
pub fn fixed_availability(
    catalog: &ContentCatalog,
    slot_count: usize,
    options: &SolverOptions,
) -> Result<Vec<f64>, SolverError> {
    let n = catalog.len();
    if slot_count == 0 {
        return Ok(vec![0.0; n]);
    }
    if slot_count >= n {
        return Ok(vec![1.0; n]);
    }
    let chain = FixedCacheChain::new(n, slot_count);
    // The stationary law does not depend on the overall request rate, so the
    // chain is solved at unit total rate (this also covers λ_HU = 0).
    let unit = catalog.with_total_rate(1.0);
    let pi = solve_recurrent_class(&chain.rate_matrix(&unit), 0, options)?;
    Ok(chain.availability(pi.probabilities()))
}

/// Availability of the device cache. With no requests the cache stays empty.
pub fn local_availability(
    catalog: &ContentCatalog,
    dist: &SizeDistribution,
    cache_capacity: f64,
    ttl_rate: f64,
    options: &SolverOptions,
) -> Result<Vec<f64>, SolverError> {
    let chain = LocalCacheChain::new(catalog.len());
    let m = chain.rate_matrix(catalog, dist, cache_capacity, ttl_rate);
    let pi = solve_recurrent_class(&m, 0, options)?;
    Ok(chain.availability(pi.probabilities()))
}

/// Solves the three cache chains (concurrently) and collects availabilities.
pub fn availability(
    catalog: &ContentCatalog,
    dist: &SizeDistribution,
    cache_dev: f64,
    ttl_rate: f64,
    sat_slots: usize,
    bs_slots: usize,
    options: &SolverOptions,
) -> Result<AvailabilityProfile, SolverError> {
    let (p_loc, (p_sat, p_bs)) = rayon::join(
        || local_availability(catalog, dist, cache_dev, ttl_rate, options),
        || {
            rayon::join(
                || fixed_availability(catalog, sat_slots, options),
                || fixed_availability(catalog, bs_slots, options),
            )
        },
    );
    Ok(AvailabilityProfile {
        p_loc: p_loc?,
        p_sat: p_sat?,
        p_bs: p_bs?,
    })
}
