//! Content catalog: Zipf popularity, per-content Poisson request rates and the
//! exponential content-size law shared by every cache.

use serde::{Deserialize, Serialize};

/// Zipf popularity `i^{-s} / Σ_j j^{-s}` for ranks `1..=n`.
///
/// `s = 0` gives the uniform distribution.
pub fn zipf_popularity(n: usize, s: f64) -> Vec<f64> {
    assert!(n >= 1, "catalog must hold at least one content");
    let weights: Vec<f64> = (1..=n).map(|i| (i as f64).powf(-s)).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Exponential content-size distribution, sizes in megabits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeDistribution {
    mean_size: f64,
    rate: f64,
}

impl SizeDistribution {
    pub fn with_mean(mean_size_mbit: f64) -> Self {
        assert!(mean_size_mbit > 0.0, "mean content size must be positive");
        Self {
            mean_size: mean_size_mbit,
            rate: 1.0 / mean_size_mbit,
        }
    }

    /// Mean size in megabits.
    pub fn mean(&self) -> f64 {
        self.mean_size
    }

    /// Rate parameter per megabit.
    pub fn rate(&self) -> f64 {
        self.rate
    }
}

/// `P(S ≤ x)` for one content.
pub fn size_cdf_one(x: f64, dist: &SizeDistribution) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    -(-dist.rate * x).exp_m1()
}

/// `P(S_i + S_j ≤ x)` for two i.i.d. contents (Erlang-2 CDF).
pub fn size_cdf_sum2(x: f64, dist: &SizeDistribution) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    let lx = dist.rate * x;
    1.0 - (-lx).exp() * (1.0 + lx)
}

/// The catalog of `N` contents ranked by popularity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentCatalog {
    zipf_s: f64,
    popularity: Vec<f64>,
    request_rate_total: f64,
    request_rate: Vec<f64>,
}

impl ContentCatalog {
    /// Builds the catalog; `request_rate_total` is the aggregate HU request rate
    /// in requests per second.
    pub fn new(n_contents: usize, zipf_s: f64, request_rate_total: f64) -> Self {
        assert!(zipf_s >= 0.0, "zipf exponent must be nonnegative");
        assert!(request_rate_total >= 0.0, "request rate must be nonnegative");
        let popularity = zipf_popularity(n_contents, zipf_s);
        let request_rate = popularity.iter().map(|p| p * request_rate_total).collect();
        Self {
            zipf_s,
            popularity,
            request_rate_total,
            request_rate,
        }
    }

    /// Same popularities with a different aggregate request rate.
    pub fn with_total_rate(&self, request_rate_total: f64) -> Self {
        Self::new(self.len(), self.zipf_s, request_rate_total)
    }

    pub fn len(&self) -> usize {
        self.popularity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.popularity.is_empty()
    }

    pub fn zipf_s(&self) -> f64 {
        self.zipf_s
    }

    pub fn popularity(&self) -> &[f64] {
        &self.popularity
    }

    pub fn request_rate_total(&self) -> f64 {
        self.request_rate_total
    }

    pub fn request_rate(&self) -> &[f64] {
        &self.request_rate
    }
}
