//! Free-space AWGN link capacities and the service rates they induce.

use crate::content::SizeDistribution;
use serde::{Deserialize, Serialize};

pub const BOLTZMANN: f64 = 1.380_649e-23;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const BITS_PER_MEGABIT: f64 = 1e6;

/// Friis free-space path loss `(4π d f / c)²` with unit antenna gains.
pub fn free_space_path_loss(distance_m: f64, carrier_hz: f64) -> f64 {
    let x = 4.0 * std::f64::consts::PI * distance_m * carrier_hz / SPEED_OF_LIGHT;
    x * x
}

/// Thermal noise power `k_B T B` in watts.
pub fn thermal_noise(bandwidth_hz: f64, noise_temp_k: f64) -> f64 {
    BOLTZMANN * noise_temp_k * bandwidth_hz
}

/// Shannon capacity in bits per second.
pub fn shannon_capacity(
    bandwidth_hz: f64,
    tx_power_w: f64,
    distance_m: f64,
    carrier_hz: f64,
    noise_temp_k: f64,
) -> f64 {
    assert!(
        bandwidth_hz > 0.0 && tx_power_w > 0.0 && distance_m > 0.0 && carrier_hz > 0.0 && noise_temp_k > 0.0,
        "link parameters must be positive"
    );
    let rx = tx_power_w / free_space_path_loss(distance_m, carrier_hz);
    capacity_at_snr(bandwidth_hz, rx / thermal_noise(bandwidth_hz, noise_temp_k))
}

/// `B · log₂(1 + snr)`.
pub fn capacity_at_snr(bandwidth_hz: f64, snr: f64) -> f64 {
    bandwidth_hz * snr.ln_1p() / std::f64::consts::LN_2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub bandwidth_hz: f64,
    pub carrier_hz: f64,
    pub distance_m: f64,
    pub tx_power_w: f64,
}

impl Link {
    pub fn capacity(&self, noise_temp_k: f64) -> f64 {
        shannon_capacity(
            self.bandwidth_hz,
            self.tx_power_w,
            self.distance_m,
            self.carrier_hz,
            noise_temp_k,
        )
    }
}

/// Explicit capacities (bits/s) replacing the computed ones.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CapacityOverrides {
    pub pu_ter: Option<f64>,
    pub hu_sat: Option<f64>,
    pub hu_bs: Option<f64>,
    pub hu_d2d: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub pu_ter: Link,
    pub hu_sat: Link,
    pub hu_bs: Link,
    pub hu_d2d: Link,
    pub noise_temp_k: f64,
    pub overrides: CapacityOverrides,
    /// Universal source to satellite, bits/s.
    pub c_sat_u: f64,
    /// Universal source to BS, bits/s.
    pub c_bs_u: f64,
}

/// Resolved capacities in bits per second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Capacities {
    pub pu_ter: f64,
    pub hu_sat: f64,
    pub hu_bs: f64,
    pub hu_d2d: f64,
    pub sat_u: f64,
    pub bs_u: f64,
}

impl LinkBudget {
    pub fn capacities(&self) -> Capacities {
        let t = self.noise_temp_k;
        let o = &self.overrides;
        Capacities {
            pu_ter: o.pu_ter.unwrap_or_else(|| self.pu_ter.capacity(t)),
            hu_sat: o.hu_sat.unwrap_or_else(|| self.hu_sat.capacity(t)),
            hu_bs: o.hu_bs.unwrap_or_else(|| self.hu_bs.capacity(t)),
            hu_d2d: o.hu_d2d.unwrap_or_else(|| self.hu_d2d.capacity(t)),
            sat_u: self.c_sat_u,
            bs_u: self.c_bs_u,
        }
    }
}

/// Per-second service rates and universal-source aggregate durations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServiceRates {
    pub mu_pu_ter: f64,
    pub mu_hu_sat: f64,
    pub mu_hu_bs: f64,
    pub mu_hu_d2d: f64,
    pub mu_hu_sat_u: f64,
    pub mu_hu_bs_u: f64,
    /// Seconds.
    pub delta_sat_u: f64,
    /// Seconds.
    pub delta_bs_u: f64,
    pub capacities: Capacities,
}

pub fn service_rates(caps: &Capacities, dist: &SizeDistribution) -> ServiceRates {
    for c in [caps.pu_ter, caps.hu_sat, caps.hu_bs, caps.hu_d2d, caps.sat_u, caps.bs_u] {
        assert!(c.is_finite() && c > 0.0, "capacities must be positive, got {c}");
    }
    let bits = dist.mean() * BITS_PER_MEGABIT;
    let delta_sat_u = bits / caps.sat_u + bits / caps.hu_sat;
    let delta_bs_u = bits / caps.bs_u + bits / caps.hu_bs;
    ServiceRates {
        mu_pu_ter: caps.pu_ter / bits,
        mu_hu_sat: caps.hu_sat / bits,
        mu_hu_bs: caps.hu_bs / bits,
        mu_hu_d2d: caps.hu_d2d / bits,
        mu_hu_sat_u: 1.0 / delta_sat_u,
        mu_hu_bs_u: 1.0 / delta_bs_u,
        delta_sat_u,
        delta_bs_u,
        capacities: *caps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn d2d() -> Link {
        Link {
            bandwidth_hz: 2e6,
            carrier_hz: 700e6,
            distance_m: 30.0,
            tx_power_w: 0.08,
        }
    }

    #[test]
    fn unit_snr_gives_bandwidth() {
        assert_relative_eq!(capacity_at_snr(3.5e6, 1.0), 3.5e6, epsilon = 1e-6);
    }

    #[test]
    fn doubling_bandwidth_doubles_capacity_at_fixed_snr() {
        assert_relative_eq!(
            capacity_at_snr(4e6, 37.0),
            2.0 * capacity_at_snr(2e6, 37.0),
            max_relative = 1e-15
        );
    }

    #[test]
    fn d2d_regression_value() {
        // Hand evaluation: FSPL = (4π·30·7e8/c)² ≈ 7.7416e5, P_rx ≈ 1.03339e-7 W,
        // noise = k_B·290·2e6 ≈ 8.00776e-15 W, SNR ≈ 1.29048e7.
        let fspl = (4.0 * std::f64::consts::PI * 30.0 * 700e6 / 299_792_458.0f64).powi(2);
        let snr = (0.08 / fspl) / (1.380_649e-23 * 290.0 * 2e6);
        let oracle = 2e6 * (1.0 + snr).log2();
        let c = d2d().capacity(290.0);
        assert_relative_eq!(c, oracle, max_relative = 1e-12);
        assert_relative_eq!(c, 47.225e6, max_relative = 1e-3);
    }

    fn fixed_caps(bs: f64) -> Capacities {
        Capacities {
            pu_ter: 1e7,
            hu_sat: 2e6,
            hu_bs: bs,
            hu_d2d: 4e7,
            sat_u: 1e6,
            bs_u: 10e6,
        }
    }

    #[test]
    fn bs_override_arithmetic() {
        let r = service_rates(&fixed_caps(10e6), &SizeDistribution::with_mean(25.0));
        assert_relative_eq!(r.mu_hu_bs, 0.4, epsilon = 1e-12);
        assert_relative_eq!(r.delta_bs_u, 5.0, epsilon = 1e-12);
        assert_relative_eq!(r.mu_hu_bs_u, 0.2, epsilon = 1e-12);
        assert_relative_eq!(r.mu_hu_bs_u, r.mu_hu_bs / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn satellite_universal_duration() {
        let r = service_rates(&fixed_caps(10e6), &SizeDistribution::with_mean(25.0));
        // 25 s from the 1 Mbps universal leg plus 25 / C_sat[Mbps].
        assert_relative_eq!(r.delta_sat_u, 25.0 + 25.0 / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn overrides_take_precedence() {
        let budget = LinkBudget {
            pu_ter: d2d(),
            hu_sat: d2d(),
            hu_bs: d2d(),
            hu_d2d: d2d(),
            noise_temp_k: 290.0,
            overrides: CapacityOverrides {
                hu_bs: Some(123.0),
                ..Default::default()
            },
            c_sat_u: 1e6,
            c_bs_u: 1e7,
        };
        let c = budget.capacities();
        assert_eq!(c.hu_bs, 123.0);
        assert_relative_eq!(c.hu_d2d, d2d().capacity(290.0));
    }

    proptest! {
        #[test]
        fn capacity_monotonicity(d in 1.0f64..1e6, f in 1e8f64..3e10, p in 1e-3f64..100.0) {
            let c = shannon_capacity(2e6, p, d, f, 290.0);
            prop_assert!(shannon_capacity(2e6, p, d * 1.1, f, 290.0) < c);
            prop_assert!(shannon_capacity(2e6, p, d, f * 1.1, 290.0) < c);
            prop_assert!(shannon_capacity(2e6, p * 1.1, d, f, 290.0) > c);
        }

        #[test]
        fn universal_path_is_slower(bs in 1e5f64..1e9, mean in 0.1f64..100.0) {
            let r = service_rates(&fixed_caps(bs), &SizeDistribution::with_mean(mean));
            prop_assert!(r.mu_hu_bs_u < r.mu_hu_bs);
            prop_assert!(r.mu_hu_sat_u < r.mu_hu_sat);
            let bits = mean * 1e6;
            let lhs = 1.0 / r.mu_hu_bs_u;
            let rhs = 1.0 / r.mu_hu_bs + bits / 10e6;
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs);
        }
    }
}
