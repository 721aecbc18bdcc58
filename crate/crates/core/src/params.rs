//! System configuration: every network parameter plus solver and simulation
//! settings, loaded from flat JSON with defaults for missing keys.

use crate::cache::MAX_FIXED_CATALOG;
use crate::content::{ContentCatalog, SizeDistribution};
use crate::ctmc::{ChannelConfig, D2DGeometry, ModeWeights};
use crate::link::{CapacityOverrides, Link, LinkBudget};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::path::Path;
use thiserror::Error;

/// Fixed-slot cache chains larger than this are refused.
pub const MAX_FIXED_CHAIN_STATES: u64 = 2_000_000;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed configuration")]
    Parse(#[from] serde_json::Error),
    #[error("invalid `{field}`: {reason}")]
    Validation { field: String, reason: String },
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Validation {
        field: field.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemParams {
    pub n_contents: usize,
    pub local_max_contents: usize,
    pub mean_content_size_mbit: f64,
    pub zipf_s: f64,
    pub n_freq_sat: u32,
    pub n_freq_ter: u32,
    pub lambda_pu: f64,
    pub lambda_hu: f64,
    pub p_sat_ch_w: f64,
    pub p_bs_ch_w: f64,
    pub p_dev_tx_w: f64,
    pub d_sat_m: f64,
    pub d_bs_m: f64,
    pub d_d2d_m: f64,
    pub w_ter_hz: f64,
    pub w_sat_hz: f64,
    pub f_sat_hz: f64,
    pub f_ter_hz: f64,
    pub cache_sat_mbit: f64,
    pub cache_bs_mbit: f64,
    pub cache_dev_mbit: f64,
    pub theta_bs: f64,
    pub theta_loc: f64,
    pub c_sat_u_bps: f64,
    pub c_bs_u_bps: f64,
    pub hu_density_per_m2: f64,
    pub d_max: u32,
    pub cell_radius_m: f64,
    pub r_int_m: f64,
    pub weight_sat: f64,
    pub weight_bs: f64,
    pub weight_dev: f64,
    pub ttl_mean_sec: f64,
    pub noise_temp_k: f64,
    pub capacity_pu_ter_bps: Option<f64>,
    pub capacity_hu_sat_bps: Option<f64>,
    pub capacity_hu_bs_bps: Option<f64>,
    pub capacity_hu_d2d_bps: Option<f64>,
    pub universal_source: bool,
    /// When false, at most one D2D operation runs at a time.
    pub overlay: bool,
    pub solver_tolerance: f64,
    pub seed: u64,
    pub horizon_sec: f64,
    pub replications: usize,
    pub warmup_fraction: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            n_contents: 20,
            local_max_contents: 2,
            mean_content_size_mbit: 25.0,
            zipf_s: 1.2,
            n_freq_sat: 2,
            n_freq_ter: 3,
            lambda_pu: 0.03,
            lambda_hu: 2.4,
            p_sat_ch_w: 48.0,
            p_bs_ch_w: 6.0,
            p_dev_tx_w: 0.08,
            d_sat_m: 300e3,
            d_bs_m: 150.0,
            d_d2d_m: 30.0,
            w_ter_hz: 2e6,
            w_sat_hz: 36e6,
            f_sat_hz: 20e9,
            f_ter_hz: 700e6,
            cache_sat_mbit: 125.0,
            cache_bs_mbit: 100.0,
            cache_dev_mbit: 50.0,
            theta_bs: 5.0,
            theta_loc: 2.0,
            c_sat_u_bps: 1e6,
            c_bs_u_bps: 10e6,
            hu_density_per_m2: 0.0018,
            d_max: 5,
            cell_radius_m: 300.0,
            r_int_m: 60.0,
            weight_sat: 1.0 / 3.0,
            weight_bs: 1.0 / 3.0,
            weight_dev: 1.0 / 3.0,
            ttl_mean_sec: 600.0,
            noise_temp_k: 290.0,
            capacity_pu_ter_bps: None,
            capacity_hu_sat_bps: None,
            capacity_hu_bs_bps: None,
            capacity_hu_d2d_bps: None,
            universal_source: true,
            overlay: true,
            solver_tolerance: 1e-10,
            seed: 1,
            horizon_sec: 1200.0,
            replications: 10,
            warmup_fraction: 0.1,
        }
    }
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

impl SystemParams {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let params: SystemParams = serde_json::from_str(text)?;
        params.validate()?;
        Ok(params)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("parameters serialize")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |field: &str, v: f64| -> Result<(), ConfigError> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invalid(field, format!("must be positive and finite, got {v}")))
            }
        };
        let nonneg = |field: &str, v: f64| -> Result<(), ConfigError> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(invalid(field, format!("must be nonnegative and finite, got {v}")))
            }
        };
        if self.n_contents == 0 || self.n_contents > MAX_FIXED_CATALOG {
            return Err(invalid(
                "n_contents",
                format!("must be in 1..={MAX_FIXED_CATALOG}, got {}", self.n_contents),
            ));
        }
        if self.local_max_contents != 2 {
            return Err(invalid(
                "local_max_contents",
                "the device cache model holds exactly two contents",
            ));
        }
        positive("mean_content_size_mbit", self.mean_content_size_mbit)?;
        nonneg("zipf_s", self.zipf_s)?;
        if self.n_freq_sat == 0 {
            return Err(invalid("n_freq_sat", "at least one satellite frequency is needed"));
        }
        if self.n_freq_ter < 2 {
            return Err(invalid("n_freq_ter", "at least two terrestrial frequencies are needed"));
        }
        nonneg("lambda_pu", self.lambda_pu)?;
        nonneg("lambda_hu", self.lambda_hu)?;
        for (f, v) in [
            ("p_sat_ch_w", self.p_sat_ch_w),
            ("p_bs_ch_w", self.p_bs_ch_w),
            ("p_dev_tx_w", self.p_dev_tx_w),
            ("d_sat_m", self.d_sat_m),
            ("d_bs_m", self.d_bs_m),
            ("d_d2d_m", self.d_d2d_m),
            ("w_ter_hz", self.w_ter_hz),
            ("w_sat_hz", self.w_sat_hz),
            ("f_sat_hz", self.f_sat_hz),
            ("f_ter_hz", self.f_ter_hz),
            ("cache_dev_mbit", self.cache_dev_mbit),
            ("theta_bs", self.theta_bs),
            ("theta_loc", self.theta_loc),
            ("c_sat_u_bps", self.c_sat_u_bps),
            ("c_bs_u_bps", self.c_bs_u_bps),
            ("hu_density_per_m2", self.hu_density_per_m2),
            ("cell_radius_m", self.cell_radius_m),
            ("r_int_m", self.r_int_m),
            ("ttl_mean_sec", self.ttl_mean_sec),
            ("noise_temp_k", self.noise_temp_k),
            ("solver_tolerance", self.solver_tolerance),
            ("horizon_sec", self.horizon_sec),
        ] {
            positive(f, v)?;
        }
        nonneg("cache_sat_mbit", self.cache_sat_mbit)?;
        nonneg("cache_bs_mbit", self.cache_bs_mbit)?;
        for (f, v) in [
            ("capacity_pu_ter_bps", self.capacity_pu_ter_bps),
            ("capacity_hu_sat_bps", self.capacity_hu_sat_bps),
            ("capacity_hu_bs_bps", self.capacity_hu_bs_bps),
            ("capacity_hu_d2d_bps", self.capacity_hu_d2d_bps),
        ] {
            if let Some(v) = v {
                positive(f, v)?;
            }
        }
        if self.r_int_m > self.cell_radius_m {
            return Err(invalid("r_int_m", "interference radius exceeds the cell radius"));
        }
        if ModeWeights::new(self.weight_sat, self.weight_bs, self.weight_dev).is_err() {
            return Err(invalid(
                "weight_sat/weight_bs/weight_dev",
                format!(
                    "weights must lie in [0,1] and sum to 1, got ({}, {}, {})",
                    self.weight_sat, self.weight_bs, self.weight_dev
                ),
            ));
        }
        if self.d_max == 0 {
            return Err(invalid("d_max", "must be at least 1"));
        }
        let bound = self.geometry().d_max_bound(self.n_freq_sat, self.n_freq_ter);
        if self.d_max as i64 > bound {
            return Err(invalid(
                "d_max",
                format!("{} exceeds the density bound {bound}", self.d_max),
            ));
        }
        if self.replications == 0 {
            return Err(invalid("replications", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(invalid("warmup_fraction", "must lie in [0, 1)"));
        }
        for (f, slots) in [
            ("cache_sat_mbit", self.sat_slots()),
            ("cache_bs_mbit", self.bs_slots()),
        ] {
            if slots < self.n_contents
                && binomial(self.n_contents as u64, slots as u64) > MAX_FIXED_CHAIN_STATES
            {
                return Err(invalid(
                    f,
                    format!("cache chain over {slots}-subsets of the catalog is too large"),
                ));
            }
        }
        Ok(())
    }

    /// Assigns one parameter by its JSON key. Numbers, booleans and `null`
    /// (for optional keys) are accepted; the result is validated.
    pub fn with_value(&self, key: &str, raw: &str) -> Result<Self, ConfigError> {
        let mut doc = serde_json::to_value(self)?;
        let map = doc.as_object_mut().expect("parameters serialize to an object");
        if !map.contains_key(key) {
            return Err(ConfigError::UnknownParameter(key.to_string()));
        }
        let raw = raw.trim();
        let value = match raw {
            "true" => Value::Bool(true),
            "false" => Value::Bool(false),
            "null" => Value::Null,
            _ => {
                let x: f64 = raw
                    .parse()
                    .map_err(|_| invalid(key, format!("`{raw}` is not a number")))?;
                let integral = matches!(map[key], Value::Number(ref n) if n.is_u64() || n.is_i64());
                if integral {
                    if x.fract() != 0.0 || x < 0.0 {
                        return Err(invalid(key, format!("expects a nonnegative integer, got {raw}")));
                    }
                    Value::from(x as u64)
                } else {
                    serde_json::Number::from_f64(x)
                        .map(Value::Number)
                        .ok_or_else(|| invalid(key, format!("`{raw}` is not finite")))?
                }
            }
        };
        map.insert(key.to_string(), value);
        let params: SystemParams = serde_json::from_value(doc)?;
        params.validate()?;
        Ok(params)
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn config_hash(&self) -> String {
        let text = serde_json::to_string(self).expect("parameters serialize");
        let digest = Sha256::digest(text.as_bytes());
        hex::encode(digest)[..16].to_string()
    }

    pub fn catalog(&self) -> ContentCatalog {
        ContentCatalog::new(self.n_contents, self.zipf_s, self.lambda_hu)
    }

    pub fn size_distribution(&self) -> SizeDistribution {
        SizeDistribution::with_mean(self.mean_content_size_mbit)
    }

    pub fn mode_weights(&self) -> ModeWeights {
        ModeWeights {
            r_sat: self.weight_sat,
            r_bs: self.weight_bs,
            r_dev: self.weight_dev,
        }
    }

    /// `D_max` in force: 1 when overlaying is disabled.
    pub fn effective_d_max(&self) -> u32 {
        if self.overlay {
            self.d_max
        } else {
            1
        }
    }

    pub fn geometry(&self) -> D2DGeometry {
        D2DGeometry {
            hu_density: self.hu_density_per_m2,
            cell_radius: self.cell_radius_m,
            interference_radius: self.r_int_m,
            d_max: self.effective_d_max(),
        }
    }

    pub fn channel_config(&self) -> ChannelConfig {
        ChannelConfig {
            n_freq_sat: self.n_freq_sat,
            n_freq_ter: self.n_freq_ter,
            d_max: self.effective_d_max(),
            lambda_pu: self.lambda_pu,
            universal_source: self.universal_source,
        }
    }

    pub fn link_budget(&self) -> LinkBudget {
        let ter = |tx_power_w| Link {
            bandwidth_hz: self.w_ter_hz,
            carrier_hz: self.f_ter_hz,
            distance_m: self.d_bs_m,
            tx_power_w,
        };
        LinkBudget {
            pu_ter: ter(self.p_bs_ch_w),
            hu_bs: ter(self.p_bs_ch_w),
            hu_sat: Link {
                bandwidth_hz: self.w_sat_hz,
                carrier_hz: self.f_sat_hz,
                distance_m: self.d_sat_m,
                tx_power_w: self.p_sat_ch_w,
            },
            hu_d2d: Link {
                bandwidth_hz: self.w_ter_hz,
                carrier_hz: self.f_ter_hz,
                distance_m: self.d_d2d_m,
                tx_power_w: self.p_dev_tx_w,
            },
            noise_temp_k: self.noise_temp_k,
            overrides: CapacityOverrides {
                pu_ter: self.capacity_pu_ter_bps,
                hu_sat: self.capacity_hu_sat_bps,
                hu_bs: self.capacity_hu_bs_bps,
                hu_d2d: self.capacity_hu_d2d_bps,
            },
            c_sat_u: self.c_sat_u_bps,
            c_bs_u: self.c_bs_u_bps,
        }
    }

    pub fn ttl_rate(&self) -> f64 {
        1.0 / self.ttl_mean_sec
    }

    fn slots(&self, cache: f64) -> usize {
        (cache / self.mean_content_size_mbit + 1e-9).floor() as usize
    }

    /// Whole mean-size contents the satellite cache holds.
    pub fn sat_slots(&self) -> usize {
        self.slots(self.cache_sat_mbit)
    }

    pub fn bs_slots(&self) -> usize {
        self.slots(self.cache_bs_mbit)
    }

    /// Expected number of devices in the cell.
    pub fn expected_devices(&self) -> f64 {
        self.hu_density_per_m2 * std::f64::consts::PI * self.cell_radius_m * self.cell_radius_m
    }
}

/// Reads and validates a JSON configuration; missing keys take defaults.
pub fn load_config(path: &Path) -> Result<SystemParams, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    SystemParams::from_json(&text)
}
