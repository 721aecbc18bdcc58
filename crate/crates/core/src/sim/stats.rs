//! Simulation counters, their empirical metric estimators and replication
//! summaries.

use super::cache_policy::PolicyKind;
use crate::ctmc::Family;
use crate::metrics::{MetricFlags, MetricsReport, PerMode, PowerBreakdown, METRIC_COLUMNS};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("observation window is empty ({0} s)")]
    EmptyWindow(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ModeCounts {
    pub sat: u64,
    pub sat_u: u64,
    pub bs: u64,
    pub bs_u: u64,
    pub d2d: u64,
}

impl ModeCounts {
    pub fn get(&self, f: Family) -> u64 {
        match f {
            Family::Sat => self.sat,
            Family::SatUniversal => self.sat_u,
            Family::Bs => self.bs,
            Family::BsUniversal => self.bs_u,
            Family::D2d => self.d2d,
        }
    }

    pub fn get_mut(&mut self, f: Family) -> &mut u64 {
        match f {
            Family::Sat => &mut self.sat,
            Family::SatUniversal => &mut self.sat_u,
            Family::Bs => &mut self.bs,
            Family::BsUniversal => &mut self.bs_u,
            Family::D2d => &mut self.d2d,
        }
    }

    pub fn sum(&self) -> u64 {
        self.sat + self.sat_u + self.bs + self.bs_u + self.d2d
    }
}

/// D2D admission checks made while `k` D2D operations were active.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct D2dProbe {
    /// Checks per requested content.
    pub attempts: Vec<u64>,
    /// Checks per requested content that found a geometrically admissible
    /// holder.
    pub feasible: Vec<u64>,
}

impl D2dProbe {
    pub fn total_attempts(&self) -> u64 {
        self.attempts.iter().sum()
    }

    pub fn total_feasible(&self) -> u64 {
        self.feasible.iter().sum()
    }
}

/// Counters of one replication. Request outcomes count requests arriving in
/// the observation window; bits and energy count what happened inside it.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SimStats {
    pub seed: u64,
    pub policy: Option<PolicyKind>,
    pub window_sec: f64,
    pub devices: usize,
    pub requests: u64,
    pub local_hits: u64,
    pub admitted: ModeCounts,
    pub served: ModeCounts,
    pub dropped: ModeCounts,
    /// Content held somewhere but no serving unit had room.
    pub blocked_capacity: u64,
    /// Content held nowhere and the universal source unavailable.
    pub blocked_unavailable: u64,
    /// Admitted but still in service at the horizon.
    pub unfinished: u64,
    pub served_bits: PerMode,
    pub local_bits: f64,
    /// Joules per power component.
    pub energy_j: PowerBreakdown,
    pub pu_arrivals: u64,
    /// PU arrivals finding every frequency of their pool taken by PUs.
    pub pu_lost: u64,
    pub relocations: u64,
    /// Indexed by the number of active D2D operations.
    pub d2d_probes: Vec<D2dProbe>,
}

impl SimStats {
    /// Served, dropped, blocked, local and unfinished requests add up.
    pub fn is_conserved(&self) -> bool {
        self.served.sum()
            + self.dropped.sum()
            + self.blocked_capacity
            + self.blocked_unavailable
            + self.local_hits
            + self.unfinished
            == self.requests
    }

    pub fn total_bits(&self) -> f64 {
        self.served_bits.sum() + self.local_bits
    }
}

fn ratio(num: u64, den: u64, flag: &mut bool) -> f64 {
    if den == 0 {
        *flag = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Empirical counterpart of every analytic metric. Dropped services are
/// charged the energy they actually consumed.
pub fn empirical_metrics(stats: &SimStats) -> Result<MetricsReport, SimError> {
    let w = stats.window_sec;
    if !(w > 0.0) {
        return Err(SimError::EmptyWindow(w));
    }
    let mut flags = MetricFlags::default();
    let mut lambda_eff = PerMode::default();
    let mut throughput = PerMode::default();
    for f in Family::ALL {
        *lambda_eff.get_mut(f) = stats.admitted.get(f) as f64 / w;
        *throughput.get_mut(f) = stats.served_bits.get(f) / w;
    }
    let (s, d) = (&stats.served, &stats.dropped);
    let p_drop_bs = ratio(d.bs + d.bs_u, s.bs + s.bs_u + d.bs + d.bs_u, &mut flags.zero_bs_rate);
    let p_drop_d2d = ratio(d.d2d, s.d2d + d.d2d, &mut flags.zero_d2d_rate);
    let p_local = if stats.requests > 0 {
        stats.local_hits as f64 / stats.requests as f64
    } else {
        0.0
    };
    let e = &stats.energy_j;
    let power = PowerBreakdown {
        bs: e.bs / w,
        bs_u: e.bs_u / w,
        d2d: e.d2d / w,
        local: e.local / w,
    };
    let g_local = stats.local_bits / w;
    let g_hu = stats.total_bits() / w;
    let epb = if stats.total_bits() > 0.0 {
        e.overall() / stats.total_bits()
    } else {
        flags.zero_goodput = true;
        0.0
    };
    Ok(MetricsReport {
        lambda_eff,
        p_drop_bs,
        p_drop_d2d,
        p_local,
        throughput,
        g_local,
        g_hu,
        power,
        p_overall: power.overall(),
        epb,
        flags,
    })
}

/// Replication mean and 95% Student-t confidence half-width of every metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub n: usize,
    pub mean: MetricsReport,
    /// NaN with fewer than two replications.
    pub ci95: MetricsReport,
}

/// Mean and 95% half-width of a sample; the half-width is NaN below two values.
pub fn mean_ci95(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    (mean, t * (var / n as f64).sqrt())
}

pub fn summarize(reports: &[MetricsReport]) -> Summary {
    let mut mean = [0.0; METRIC_COLUMNS.len()];
    let mut ci = [0.0; METRIC_COLUMNS.len()];
    for k in 0..METRIC_COLUMNS.len() {
        let xs: Vec<f64> = reports.iter().map(|r| r.values()[k]).collect();
        (mean[k], ci[k]) = mean_ci95(&xs);
    }
    let flags = reports
        .iter()
        .fold(MetricFlags::default(), |acc, r| acc.union(r.flags));
    Summary {
        n: reports.len(),
        mean: MetricsReport::from_values(mean, flags),
        ci95: MetricsReport::from_values(ci, MetricFlags::default()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_requests_give_a_flagged_zero_report() {
        let stats = SimStats {
            window_sec: 100.0,
            ..Default::default()
        };
        let r = empirical_metrics(&stats).unwrap();
        assert!(r.values().iter().all(|&v| v == 0.0));
        assert!(r.flags.zero_goodput && r.flags.zero_bs_rate && r.flags.zero_d2d_rate);
    }

    #[test]
    fn empty_window_is_an_error() {
        assert_eq!(empirical_metrics(&SimStats::default()), Err(SimError::EmptyWindow(0.0)));
    }

    #[test]
    fn single_bs_service_accounting() {
        let (bits, cap, w, p_ch) = (25e6, 1e7, 500.0, 6.0);
        let mut stats = SimStats {
            window_sec: w,
            requests: 1,
            ..Default::default()
        };
        stats.admitted.bs = 1;
        stats.served.bs = 1;
        stats.served_bits.bs = bits;
        stats.energy_j.bs = p_ch * bits / cap;
        let r = empirical_metrics(&stats).unwrap();
        assert_relative_eq!(r.throughput.bs, bits / w);
        assert_relative_eq!(r.power.bs, p_ch * (bits / cap) / w);
        assert_relative_eq!(r.epb, p_ch / cap);
        assert!(stats.is_conserved());
    }

    #[test]
    fn ci_matches_hand_computation() {
        // mean 2, sample sd 1, t_{0.975, 2} = 4.302653
        let (m, h) = mean_ci95(&[1.0, 2.0, 3.0]);
        assert_relative_eq!(m, 2.0);
        assert_relative_eq!(h, 4.302_652_729_7 / 3f64.sqrt(), max_relative = 1e-9);
        assert!(mean_ci95(&[5.0]).1.is_nan());
    }
}
