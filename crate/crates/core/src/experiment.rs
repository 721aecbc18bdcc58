//! Analyze, simulate and sweep runs producing CSV rows.

use crate::analysis::{AnalysisError, Analyzer};
use crate::params::{ConfigError, SystemParams};
use crate::report::CsvRow;
use crate::sim::{empirical_metrics, replication_seed, run_replications, summarize, PolicyKind, SimError};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Simulation(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationPlan {
    pub policy: PolicyKind,
    pub seed: u64,
    pub replications: usize,
    pub horizon_sec: f64,
}

impl SimulationPlan {
    /// Seed, replication count and horizon taken from `params`.
    pub fn from_params(params: &SystemParams, policy: PolicyKind) -> Self {
        Self {
            policy,
            seed: params.seed,
            replications: params.replications,
            horizon_sec: params.horizon_sec,
        }
    }
}

pub fn analyze_rows(analyzer: &Analyzer, params: &SystemParams) -> Result<Vec<CsvRow>, ExperimentError> {
    Ok(vec![CsvRow::analytic(&analyzer.analyze(params)?)])
}

/// One row per replication followed by the aggregate row.
pub fn simulate_rows(params: &SystemParams, plan: &SimulationPlan) -> Result<Vec<CsvRow>, ExperimentError> {
    let hash = params.config_hash();
    let runs = run_replications(params, plan.policy, plan.seed, plan.replications, plan.horizon_sec);
    let reports = runs.iter().map(empirical_metrics).collect::<Result<Vec<_>, _>>()?;
    let mut rows: Vec<CsvRow> = reports
        .iter()
        .enumerate()
        .map(|(i, r)| CsvRow::replication(&hash, plan.policy, i, replication_seed(plan.seed, i), *r))
        .collect();
    rows.push(CsvRow::aggregate(&hash, plan.policy, plan.seed, &summarize(&reports)));
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub param: String,
    pub values: Vec<String>,
    /// Also simulate every point.
    pub simulate: Option<SimulationPlan>,
}

/// Splits a comma separated list, dropping blanks.
pub fn parse_values(list: &str) -> Vec<String> {
    list.split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(str::to_string)
        .collect()
}

/// Sets `key` to `raw`. Setting one mode weight moves the partner weight
/// (sat and dev pair with bs, bs pairs with dev) so the three still sum to 1.
pub fn apply_sweep_value(params: &SystemParams, key: &str, raw: &str) -> Result<SystemParams, ConfigError> {
    let partner = match key {
        "weight_sat" | "weight_dev" => Some("weight_bs"),
        "weight_bs" => Some("weight_dev"),
        _ => None,
    };
    let Some(partner) = partner else {
        return params.with_value(key, raw);
    };
    let x: f64 = raw.trim().parse().map_err(|_| ConfigError::Validation {
        field: key.to_string(),
        reason: format!("`{raw}` is not a number"),
    })?;
    let mut p = params.clone();
    let w = |p: &mut SystemParams, k: &str, v: f64| match k {
        "weight_sat" => p.weight_sat = v,
        "weight_bs" => p.weight_bs = v,
        _ => p.weight_dev = v,
    };
    w(&mut p, key, x);
    let rest = 1.0 - p.weight_sat - p.weight_bs - p.weight_dev;
    let current = match partner {
        "weight_bs" => p.weight_bs,
        _ => p.weight_dev,
    };
    // snap round-off so that e.g. 1 - 0.75 - 0.25 is exactly zero
    let v = current + rest;
    w(&mut p, partner, if v.abs() < 1e-12 { 0.0 } else { v });
    p.validate()?;
    Ok(p)
}

/// Every value is validated before any point runs. Points run in parallel;
/// rows come back in value order.
pub fn run_sweep(
    analyzer: &Analyzer,
    base: &SystemParams,
    spec: &SweepSpec,
) -> Result<Vec<CsvRow>, ExperimentError> {
    let points = spec
        .values
        .iter()
        .map(|v| apply_sweep_value(base, &spec.param, v).map(|p| (v.clone(), p)))
        .collect::<Result<Vec<_>, _>>()?;
    let per_point = points
        .par_iter()
        .map(|(value, p)| {
            let mut rows = analyze_rows(analyzer, p)?;
            if let Some(plan) = &spec.simulate {
                rows.extend(simulate_rows(p, plan)?);
            }
            Ok(rows
                .into_iter()
                .map(|r| r.with_sweep(&spec.param, value))
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    Ok(per_point.into_iter().flatten().collect())
}
