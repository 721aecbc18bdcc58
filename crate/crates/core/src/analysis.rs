//! Analytic pipeline: catalog → cache chains → availability → channel chain
//! → stationary solve → metrics.

use crate::cache::{fixed_availability, local_availability, AvailabilityProfile};
use crate::ctmc::{ChannelState, ModelError, RaInputs, RaModel};
use crate::link::{service_rates, ServiceRates};
use crate::metrics::{evaluate, MetricInputs, MetricsReport, PowerParams};
use crate::params::SystemParams;
use crate::solver::{solve_recurrent_class, SolverError, SolverOptions};
use serde::Serialize;
use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Debug, Clone, Serialize)]
pub struct Analysis {
    pub report: MetricsReport,
    pub availability: AvailabilityProfile,
    pub rates: ServiceRates,
    pub n_states: usize,
    /// `‖πQ‖∞` of the channel chain solution.
    pub residual: f64,
    pub config_hash: String,
}

type FixedKey = (usize, u64, usize);

/// Runs the pipeline, memoizing fixed-slot cache availabilities, which only
/// depend on the catalog size, Zipf exponent and slot count.
#[derive(Debug, Default)]
pub struct Analyzer {
    fixed: Mutex<HashMap<FixedKey, Arc<Vec<f64>>>>,
}

impl Analyzer {
    pub fn new() -> Self {
        Self::default()
    }

    fn fixed(&self, params: &SystemParams, slots: usize, opts: &SolverOptions) -> Result<Arc<Vec<f64>>, SolverError> {
        let key = (params.n_contents, params.zipf_s.to_bits(), slots);
        if let Some(v) = self.fixed.lock().expect("memo lock").get(&key) {
            return Ok(v.clone());
        }
        let v = Arc::new(fixed_availability(&params.catalog(), slots, opts)?);
        self.fixed.lock().expect("memo lock").insert(key, v.clone());
        Ok(v)
    }

    pub fn availability(&self, params: &SystemParams) -> Result<AvailabilityProfile, SolverError> {
        let opts = SolverOptions::with_tolerance(params.solver_tolerance);
        let ((p_sat, p_bs), p_loc) = rayon::join(
            || {
                (
                    self.fixed(params, params.sat_slots(), &opts),
                    self.fixed(params, params.bs_slots(), &opts),
                )
            },
            || {
                local_availability(
                    &params.catalog(),
                    &params.size_distribution(),
                    params.cache_dev_mbit,
                    params.ttl_rate(),
                    &opts,
                )
            },
        );
        Ok(AvailabilityProfile {
            p_loc: p_loc?,
            p_sat: p_sat?.as_ref().clone(),
            p_bs: p_bs?.as_ref().clone(),
        })
    }

    pub fn analyze(&self, params: &SystemParams) -> Result<Analysis, AnalysisError> {
        let availability = self.availability(params)?;
        analyze_with(params, availability)
    }
}

/// Runs the channel-chain part of the pipeline for given cache availabilities.
pub fn analyze_with(params: &SystemParams, availability: AvailabilityProfile) -> Result<Analysis, AnalysisError> {
    let catalog = params.catalog();
    let dist = params.size_distribution();
    let rates = service_rates(&params.link_budget().capacities(), &dist);
    let model = RaModel::build(&RaInputs {
        channels: params.channel_config(),
        catalog: &catalog,
        availability: &availability,
        weights: params.mode_weights(),
        geometry: params.geometry(),
        rates,
    })?;
    let root = model.index_of(&ChannelState::EMPTY).expect("empty state enumerated");
    let pi = solve_recurrent_class(
        model.matrix(),
        root,
        &SolverOptions::with_tolerance(params.solver_tolerance),
    )?;
    let report = evaluate(
        pi.probabilities(),
        &model,
        &MetricInputs {
            popularity: catalog.popularity(),
            p_loc: &availability.p_loc,
            lambda_hu: params.lambda_hu,
            dist,
            rates,
            power: PowerParams {
                p_bs_ch_w: params.p_bs_ch_w,
                p_dev_tx_w: params.p_dev_tx_w,
                theta_bs: params.theta_bs,
                theta_loc: params.theta_loc,
            },
        },
    );
    Ok(Analysis {
        report,
        availability,
        rates,
        n_states: model.n_states(),
        residual: pi.residual(),
        config_hash: params.config_hash(),
    })
}

/// One-shot pipeline without memoization.
pub fn analyze(params: &SystemParams) -> Result<Analysis, AnalysisError> {
    Analyzer::new().analyze(params)
}

/// Operating point the link capacities are fitted to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationTarget {
    pub weight_sat: f64,
    pub weight_bs: f64,
    pub weight_dev: f64,
    /// Bits per second.
    pub g_hu: f64,
    /// Joules per bit.
    pub epb: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Calibration {
    pub capacity_hu_bs_bps: f64,
    /// Squared log errors of goodput and energy per bit, summed.
    pub objective: f64,
    pub report: MetricsReport,
}

impl Calibration {
    /// `params` with the fitted capacity as an override.
    pub fn apply(&self, params: &SystemParams) -> SystemParams {
        SystemParams {
            capacity_hu_bs_bps: Some(self.capacity_hu_bs_bps),
            ..params.clone()
        }
    }
}

/// Search range of log10 C_HU^BS in bits per second.
const LOG_CAP_BS: (f64, f64) = (5.0, 8.5);

/// Fits the HU-BS capacity so the analytic goodput and energy per bit at
/// `target`'s mode weights match the target values, minimizing the summed
/// squared log errors. The other capacities keep their configured values.
pub fn calibrate_capacities(
    analyzer: &Analyzer,
    base: &SystemParams,
    target: &CalibrationTarget,
) -> Result<Calibration, AnalysisError> {
    let point = SystemParams {
        weight_sat: target.weight_sat,
        weight_bs: target.weight_bs,
        weight_dev: target.weight_dev,
        ..base.clone()
    };
    let availability = analyzer.availability(&point)?;
    let eval = |lbs: f64| -> Result<(f64, MetricsReport), AnalysisError> {
        let p = SystemParams {
            capacity_hu_bs_bps: Some(10f64.powf(lbs)),
            ..point.clone()
        };
        let r = analyze_with(&p, availability.clone())?.report;
        let err = if r.g_hu > 0.0 && r.epb > 0.0 {
            (r.g_hu / target.g_hu).ln().powi(2) + (r.epb / target.epb).ln().powi(2)
        } else {
            f64::INFINITY
        };
        Ok((err, r))
    };

    let steps = 35;
    let grid = |k: usize| LOG_CAP_BS.0 + (LOG_CAP_BS.1 - LOG_CAP_BS.0) * k as f64 / steps as f64;
    let mut best_k = 0;
    let mut best_err = f64::INFINITY;
    for k in 0..=steps {
        let (err, _) = eval(grid(k))?;
        if err < best_err {
            best_err = err;
            best_k = k;
        }
    }
    // Golden-section search on the bracketing grid cells.
    let (mut lo, mut hi) = (grid(best_k.saturating_sub(1)), grid((best_k + 1).min(steps)));
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - ratio * (hi - lo);
    let mut b = lo + ratio * (hi - lo);
    let (mut fa, mut fb) = (eval(a)?.0, eval(b)?.0);
    while hi - lo > 1e-6 {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - ratio * (hi - lo);
            fa = eval(a)?.0;
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + ratio * (hi - lo);
            fb = eval(b)?.0;
        }
    }
    let lbs = (lo + hi) / 2.0;
    let (objective, report) = eval(lbs)?;
    Ok(Calibration {
        capacity_hu_bs_bps: 10f64.powf(lbs),
        objective,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn defaults_meet_the_solver_contract() {
        let a = analyze(&SystemParams::default()).unwrap();
        assert_eq!(a.n_states, 420);
        assert!(a.residual <= 1e-10, "{}", a.residual);
        assert!(a.report.g_hu.is_finite() && a.report.g_hu > 0.0);
        assert!(a.report.epb.is_finite() && a.report.epb > 0.0);
        assert!(!a.report.flags.any());
    }

    #[test]
    fn overlay_is_inert_without_d2d_weight() {
        let on = SystemParams {
            weight_sat: 0.5,
            weight_bs: 0.5,
            weight_dev: 0.0,
            ..Default::default()
        };
        let off = SystemParams { overlay: false, ..on.clone() };
        let (a, b) = (analyze(&on).unwrap().report, analyze(&off).unwrap().report);
        for (x, y) in a.values().iter().zip(b.values()) {
            assert_relative_eq!(*x, y, max_relative = 1e-9, epsilon = 1e-300);
        }
        assert_eq!(a.lambda_eff.d2d, 0.0);
        assert!(a.flags.zero_d2d_rate);
    }

    #[test]
    fn no_primary_users_means_no_drops() {
        let p = SystemParams {
            lambda_pu: 0.0,
            ..Default::default()
        };
        let r = analyze(&p).unwrap().report;
        assert_eq!(r.p_drop_bs, 0.0);
        assert_eq!(r.p_drop_d2d, 0.0);
        assert!(r.g_hu > 0.0);
    }

    #[test]
    fn idle_network_reports_zero_goodput() {
        let p = SystemParams {
            lambda_hu: 0.0,
            ..Default::default()
        };
        let r = analyze(&p).unwrap().report;
        assert_eq!(r.g_hu, 0.0);
        assert!(r.flags.zero_goodput);
    }

    #[test]
    fn memoized_and_direct_pipelines_agree() {
        let analyzer = Analyzer::new();
        for lambda_hu in [0.8, 2.4, 0.8] {
            let p = SystemParams {
                lambda_hu,
                ..Default::default()
            };
            assert_eq!(analyzer.analyze(&p).unwrap().report, analyze(&p).unwrap().report);
        }
    }

    #[test]
    fn calibration_hits_a_reachable_target() {
        let analyzer = Analyzer::new();
        let base = SystemParams::default();
        let truth = SystemParams {
            capacity_hu_bs_bps: Some(4e6),
            weight_sat: 0.25,
            weight_bs: 0.75,
            weight_dev: 0.0,
            ..base.clone()
        };
        let r = analyzer.analyze(&truth).unwrap().report;
        let target = CalibrationTarget {
            weight_sat: 0.25,
            weight_bs: 0.75,
            weight_dev: 0.0,
            g_hu: r.g_hu,
            epb: r.epb,
        };
        let c = calibrate_capacities(&analyzer, &base, &target).unwrap();
        assert_relative_eq!(c.capacity_hu_bs_bps, 4e6, max_relative = 1e-4);
        assert!(c.objective < 1e-10);
        assert_eq!(c.apply(&base).capacity_hu_bs_bps, Some(c.capacity_hu_bs_bps));
    }
}
