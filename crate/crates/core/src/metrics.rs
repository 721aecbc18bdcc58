//! Closed-form performance metrics from the stationary channel distribution:
//! effective arrival rates, drop probabilities, goodput and power.

use crate::content::SizeDistribution;
use crate::ctmc::{idle_counts, Family, RaModel};
use crate::link::{ServiceRates, BITS_PER_MEGABIT};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("goodput is zero, energy per bit is undefined")]
    ZeroGoodput,
}

/// One value per service mode.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PerMode {
    pub sat: f64,
    pub sat_u: f64,
    pub bs: f64,
    pub bs_u: f64,
    pub d2d: f64,
}

impl PerMode {
    pub fn get(&self, f: Family) -> f64 {
        match f {
            Family::Sat => self.sat,
            Family::SatUniversal => self.sat_u,
            Family::Bs => self.bs,
            Family::BsUniversal => self.bs_u,
            Family::D2d => self.d2d,
        }
    }

    pub fn get_mut(&mut self, f: Family) -> &mut f64 {
        match f {
            Family::Sat => &mut self.sat,
            Family::SatUniversal => &mut self.sat_u,
            Family::Bs => &mut self.bs,
            Family::BsUniversal => &mut self.bs_u,
            Family::D2d => &mut self.d2d,
        }
    }

    pub fn sum(&self) -> f64 {
        self.sat + self.sat_u + self.bs + self.bs_u + self.d2d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PowerBreakdown {
    pub bs: f64,
    pub bs_u: f64,
    pub d2d: f64,
    pub local: f64,
}

impl PowerBreakdown {
    /// Total terrestrial power; the satellite is solar powered and excluded.
    pub fn overall(&self) -> f64 {
        self.bs + self.bs_u + self.d2d + self.local
    }
}

/// Metrics whose denominators vanished and were reported as 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MetricFlags {
    pub zero_bs_rate: bool,
    pub zero_d2d_rate: bool,
    pub zero_goodput: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DropProbabilities {
    pub p_drop_bs: f64,
    pub p_drop_d2d: f64,
    /// Stationary probability that a non-f1 PU arrival preempts an HU.
    pub utilization_u: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Requests per second.
    pub lambda_eff: PerMode,
    pub p_drop_bs: f64,
    pub p_drop_d2d: f64,
    pub p_local: f64,
    /// Bits per second.
    pub throughput: PerMode,
    pub g_local: f64,
    pub g_hu: f64,
    /// Watts.
    pub power: PowerBreakdown,
    pub p_overall: f64,
    /// Joules per bit.
    pub epb: f64,
    pub flags: MetricFlags,
}

/// Names of the values returned by [`MetricsReport::values`], in order.
pub const METRIC_COLUMNS: [&str; 21] = [
    "lambda_eff_sat",
    "lambda_eff_sat_u",
    "lambda_eff_bs",
    "lambda_eff_bs_u",
    "lambda_eff_d2d",
    "p_drop_bs",
    "p_drop_d2d",
    "p_local",
    "th_sat_bps",
    "th_sat_u_bps",
    "th_bs_bps",
    "th_bs_u_bps",
    "th_d2d_bps",
    "g_local_bps",
    "g_hu_bps",
    "power_bs_w",
    "power_bs_u_w",
    "power_d2d_w",
    "power_local_w",
    "p_overall_w",
    "epb_j_per_bit",
];

impl MetricsReport {
    /// Every numeric field, flattened in [`METRIC_COLUMNS`] order.
    pub fn values(&self) -> [f64; 21] {
        let (l, t, p) = (&self.lambda_eff, &self.throughput, &self.power);
        [
            l.sat,
            l.sat_u,
            l.bs,
            l.bs_u,
            l.d2d,
            self.p_drop_bs,
            self.p_drop_d2d,
            self.p_local,
            t.sat,
            t.sat_u,
            t.bs,
            t.bs_u,
            t.d2d,
            self.g_local,
            self.g_hu,
            p.bs,
            p.bs_u,
            p.d2d,
            p.local,
            self.p_overall,
            self.epb,
        ]
    }

    pub fn from_values(v: [f64; 21], flags: MetricFlags) -> Self {
        let mode = |k: usize| PerMode {
            sat: v[k],
            sat_u: v[k + 1],
            bs: v[k + 2],
            bs_u: v[k + 3],
            d2d: v[k + 4],
        };
        Self {
            lambda_eff: mode(0),
            p_drop_bs: v[5],
            p_drop_d2d: v[6],
            p_local: v[7],
            throughput: mode(8),
            g_local: v[13],
            g_hu: v[14],
            power: PowerBreakdown {
                bs: v[15],
                bs_u: v[16],
                d2d: v[17],
                local: v[18],
            },
            p_overall: v[19],
            epb: v[20],
            flags,
        }
    }
}

impl MetricFlags {
    pub fn any(&self) -> bool {
        self.zero_bs_rate || self.zero_d2d_rate || self.zero_goodput
    }

    pub fn union(self, other: Self) -> Self {
        Self {
            zero_bs_rate: self.zero_bs_rate || other.zero_bs_rate,
            zero_d2d_rate: self.zero_d2d_rate || other.zero_d2d_rate,
            zero_goodput: self.zero_goodput || other.zero_goodput,
        }
    }

    /// Set flags joined by `|`, empty when none is set.
    pub fn label(&self) -> String {
        [
            (self.zero_bs_rate, "zero_bs_rate"),
            (self.zero_d2d_rate, "zero_d2d_rate"),
            (self.zero_goodput, "zero_goodput"),
        ]
        .iter()
        .filter(|(set, _)| *set)
        .map(|(_, name)| *name)
        .collect::<Vec<_>>()
        .join("|")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerParams {
    pub p_bs_ch_w: f64,
    pub p_dev_tx_w: f64,
    pub theta_bs: f64,
    pub theta_loc: f64,
}

/// `λ_eff^f = Σ_x Γ_f(x) π_x`.
pub fn effective_rates(pi: &[f64], model: &RaModel) -> PerMode {
    let gamma = model.gamma();
    assert_eq!(pi.len(), gamma.n_states());
    let mut out = PerMode::default();
    for (x, &p) in pi.iter().enumerate() {
        let g = gamma.totals(x);
        for f in Family::ALL {
            *out.get_mut(f) += g[f.index()] * p;
        }
    }
    out
}

pub fn drop_probabilities(
    pi: &[f64],
    model: &RaModel,
    lambda_eff: &PerMode,
    flags: &mut MetricFlags,
) -> DropProbabilities {
    let cfg = model.channels();
    let n_ter = cfg.n_freq_ter as f64;
    let mut u = 0.0;
    let mut d2d_mass = 0.0;
    for (s, &p) in model.states().iter().zip(pi) {
        let (_, idle_ter) = idle_counts(s, cfg);
        if idle_ter == 0 && s.i_pu_ter_nf1 != cfg.n_freq_ter - 1 {
            u += p;
        }
        if s.i_pu_ter_f1 == 0 {
            d2d_mass += s.i_hu_d_f1 as f64 * p;
        }
    }
    let bs_rate = lambda_eff.bs + lambda_eff.bs_u;
    let p_drop_bs = if bs_rate > 0.0 {
        ((n_ter - 1.0) * cfg.lambda_pu / n_ter * u / bs_rate).min(1.0)
    } else {
        flags.zero_bs_rate = true;
        0.0
    };
    let p_drop_d2d = if lambda_eff.d2d > 0.0 {
        (cfg.lambda_pu / n_ter * d2d_mass / lambda_eff.d2d).min(1.0)
    } else {
        flags.zero_d2d_rate = true;
        0.0
    };
    DropProbabilities {
        p_drop_bs,
        p_drop_d2d,
        utilization_u: u,
    }
}

/// Request-weighted local-cache hit probability.
pub fn p_local(popularity: &[f64], p_loc: &[f64]) -> f64 {
    let total: f64 = popularity.iter().sum();
    popularity.iter().zip(p_loc).map(|(p, l)| p * l).sum::<f64>() / total
}

/// `(throughput, g_local, g_hu)` in bits per second.
pub fn goodput(
    lambda_eff: &PerMode,
    drops: &DropProbabilities,
    lambda_hu: f64,
    p_local: f64,
    dist: &SizeDistribution,
) -> (PerMode, f64, f64) {
    let bits = dist.mean() * BITS_PER_MEGABIT;
    let throughput = PerMode {
        sat: lambda_eff.sat * bits,
        sat_u: lambda_eff.sat_u * bits,
        bs: lambda_eff.bs * (1.0 - drops.p_drop_bs) * bits,
        bs_u: lambda_eff.bs_u * (1.0 - drops.p_drop_bs) * bits,
        d2d: lambda_eff.d2d * (1.0 - drops.p_drop_d2d) * bits,
    };
    let g_local = lambda_hu * p_local * bits;
    (throughput, g_local, g_local + throughput.sum())
}

/// Power components (watts) of the BS, BS universal relay, D2D transmitters
/// and local-cache hits.
pub fn power(
    lambda_eff: &PerMode,
    drops: &DropProbabilities,
    rates: &ServiceRates,
    pw: &PowerParams,
    lambda_hu: f64,
    p_local: f64,
    dist: &SizeDistribution,
) -> PowerBreakdown {
    let bits = dist.mean() * BITS_PER_MEGABIT;
    let pb = drops.p_drop_bs;
    let pd = drops.p_drop_d2d;
    let bs_tx_service = pw.p_bs_ch_w / rates.mu_hu_bs;
    let bs = lambda_eff.bs * (1.0 - pb) * bs_tx_service + lambda_eff.bs * pb * bs_tx_service / 2.0;
    let relay_leg = bits / rates.capacities.bs_u;
    let reception = pw.p_bs_ch_w / pw.theta_bs * relay_leg;
    // A dropped relay service transmits for half its aggregate duration minus
    // the relay leg; that remainder is negative when the relay leg dominates.
    let dropped_tx = (rates.delta_bs_u / 2.0 - relay_leg).max(0.0);
    let bs_u = lambda_eff.bs_u * (1.0 - pb) * (bs_tx_service + reception)
        + lambda_eff.bs_u * pb * (pw.p_bs_ch_w * dropped_tx + reception);
    let d2d_service = pw.p_dev_tx_w / rates.mu_hu_d2d;
    let d2d = lambda_eff.d2d * (1.0 - pd) * d2d_service + lambda_eff.d2d * pd * d2d_service / 2.0;
    let local = lambda_hu * p_local * (pw.p_dev_tx_w / pw.theta_loc) / rates.mu_hu_d2d;
    PowerBreakdown {
        bs,
        bs_u,
        d2d,
        local,
    }
}

pub fn energy_per_bit(p_overall: f64, g_hu: f64) -> Result<f64, MetricsError> {
    if g_hu > 0.0 {
        Ok(p_overall / g_hu)
    } else {
        Err(MetricsError::ZeroGoodput)
    }
}

/// Everything beyond the stationary distribution the metrics need.
#[derive(Debug, Clone, Copy)]
pub struct MetricInputs<'a> {
    pub popularity: &'a [f64],
    pub p_loc: &'a [f64],
    pub lambda_hu: f64,
    pub dist: SizeDistribution,
    pub rates: ServiceRates,
    pub power: PowerParams,
}

pub fn evaluate(pi: &[f64], model: &RaModel, inputs: &MetricInputs<'_>) -> MetricsReport {
    let mut flags = MetricFlags::default();
    let lambda_eff = effective_rates(pi, model);
    let drops = drop_probabilities(pi, model, &lambda_eff, &mut flags);
    let p_local = p_local(inputs.popularity, inputs.p_loc);
    let (throughput, g_local, g_hu) =
        goodput(&lambda_eff, &drops, inputs.lambda_hu, p_local, &inputs.dist);
    let power = power(
        &lambda_eff,
        &drops,
        &inputs.rates,
        &inputs.power,
        inputs.lambda_hu,
        p_local,
        &inputs.dist,
    );
    let p_overall = power.overall();
    let epb = energy_per_bit(p_overall, g_hu).unwrap_or_else(|_| {
        flags.zero_goodput = true;
        0.0
    });
    MetricsReport {
        lambda_eff,
        p_drop_bs: drops.p_drop_bs,
        p_drop_d2d: drops.p_drop_d2d,
        p_local,
        throughput,
        g_local,
        g_hu,
        power,
        p_overall,
        epb,
        flags,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::link::{service_rates, Capacities};
    use approx::assert_relative_eq;

    fn rates() -> ServiceRates {
        service_rates(
            &Capacities {
                pu_ter: 1e7,
                hu_sat: 2e6,
                hu_bs: 1e7,
                hu_d2d: 4e7,
                sat_u: 1e6,
                bs_u: 1e7,
            },
            &SizeDistribution::with_mean(25.0),
        )
    }

    fn pw() -> PowerParams {
        PowerParams {
            p_bs_ch_w: 6.0,
            p_dev_tx_w: 0.08,
            theta_bs: 5.0,
            theta_loc: 2.0,
        }
    }

    fn lam() -> PerMode {
        PerMode {
            sat: 0.3,
            sat_u: 0.1,
            bs: 0.5,
            bs_u: 0.2,
            d2d: 0.7,
        }
    }

    #[test]
    fn no_drops_means_full_bs_charge() {
        let d = DropProbabilities::default();
        let p = power(&lam(), &d, &rates(), &pw(), 2.4, 0.1, &SizeDistribution::with_mean(25.0));
        assert_relative_eq!(p.bs, 0.5 * 6.0 / rates().mu_hu_bs, epsilon = 1e-12);
    }

    #[test]
    fn certain_drop_means_half_charge() {
        let d = DropProbabilities {
            p_drop_bs: 1.0,
            ..Default::default()
        };
        let p = power(&lam(), &d, &rates(), &pw(), 2.4, 0.1, &SizeDistribution::with_mean(25.0));
        assert_relative_eq!(p.bs, 0.5 * 6.0 / (2.0 * rates().mu_hu_bs), epsilon = 1e-12);
    }

    #[test]
    fn relay_power_terms() {
        let r = rates();
        let d = DropProbabilities {
            p_drop_bs: 0.2,
            ..Default::default()
        };
        let p = power(&lam(), &d, &r, &pw(), 0.0, 0.0, &SizeDistribution::with_mean(25.0));
        // equal legs of 2.5 s: Δ/2 − leg = 0, so drops only pay reception
        let reception = 6.0 / 5.0 * 2.5;
        let expected = 0.2 * 0.8 * (6.0 * 2.5 + reception) + 0.2 * 0.2 * reception;
        assert_relative_eq!(p.bs_u, expected, epsilon = 1e-12);
        assert_eq!(p.local, 0.0);
    }

    #[test]
    fn local_power_and_goodput() {
        let d = DropProbabilities::default();
        let dist = SizeDistribution::with_mean(25.0);
        let p = power(&PerMode::default(), &d, &rates(), &pw(), 2.0, 0.25, &dist);
        assert_relative_eq!(p.local, 2.0 * 0.25 * 0.04 / rates().mu_hu_d2d, epsilon = 1e-15);
        let (th, g_local, g_hu) = goodput(&lam(), &d, 2.0, 0.25, &dist);
        assert_relative_eq!(g_local, 0.5 * 25e6);
        assert_relative_eq!(g_hu, g_local + th.sum());
    }

    #[test]
    fn uniform_local_availability() {
        let pop = crate::content::zipf_popularity(10, 1.2);
        assert_relative_eq!(p_local(&pop, &[0.3; 10]), 0.3, epsilon = 1e-15);
        assert_eq!(p_local(&pop, &[0.0; 10]), 0.0);
    }

    #[test]
    fn zero_goodput_is_an_error() {
        assert_eq!(energy_per_bit(1.0, 0.0), Err(MetricsError::ZeroGoodput));
        assert_eq!(energy_per_bit(2.0, 4.0), Ok(0.5));
    }

    #[test]
    fn values_round_trip() {
        let v: [f64; 21] = std::array::from_fn(|k| k as f64 + 0.5);
        let flags = MetricFlags {
            zero_d2d_rate: true,
            ..Default::default()
        };
        let r = MetricsReport::from_values(v, flags);
        assert_eq!(r.values(), v);
        assert_eq!(r.g_hu, 14.5);
        assert_eq!(r.flags.label(), "zero_d2d_rate");
    }
}
