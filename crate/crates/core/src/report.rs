//! CSV rows shared by the analyze, simulate and sweep commands.

use crate::analysis::Analysis;
use crate::metrics::{MetricsReport, METRIC_COLUMNS};
use crate::sim::{PolicyKind, Summary};
use std::io::{self, Write};

pub const LEAD_COLUMNS: [&str; 9] = [
    "row_kind",
    "sweep_param",
    "sweep_value",
    "policy",
    "replication",
    "seed",
    "config_hash",
    "n_states",
    "residual",
];

/// Full header: lead columns, metrics, their `_ci95` half-widths, flags.
pub fn header() -> Vec<String> {
    LEAD_COLUMNS
        .iter()
        .map(|c| c.to_string())
        .chain(METRIC_COLUMNS.iter().map(|c| c.to_string()))
        .chain(METRIC_COLUMNS.iter().map(|c| format!("{c}_ci95")))
        .chain(std::iter::once("flags".to_string()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Analytic,
    Replication,
    Aggregate,
}

impl RowKind {
    pub fn name(self) -> &'static str {
        match self {
            RowKind::Analytic => "analytic",
            RowKind::Replication => "replication",
            RowKind::Aggregate => "aggregate",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub kind: RowKind,
    pub sweep_param: Option<String>,
    pub sweep_value: Option<String>,
    pub policy: Option<PolicyKind>,
    pub replication: Option<usize>,
    pub seed: Option<u64>,
    pub config_hash: String,
    pub n_states: Option<usize>,
    pub residual: Option<f64>,
    pub metrics: MetricsReport,
    pub ci95: Option<MetricsReport>,
}

/// Nine significant digits; NaN prints as `nan`.
pub fn format_number(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x:.8e}")
    }
}

impl CsvRow {
    pub fn analytic(analysis: &Analysis) -> Self {
        Self {
            kind: RowKind::Analytic,
            sweep_param: None,
            sweep_value: None,
            policy: None,
            replication: None,
            seed: None,
            config_hash: analysis.config_hash.clone(),
            n_states: Some(analysis.n_states),
            residual: Some(analysis.residual),
            metrics: analysis.report,
            ci95: None,
        }
    }

    pub fn replication(
        config_hash: &str,
        policy: PolicyKind,
        index: usize,
        seed: u64,
        metrics: MetricsReport,
    ) -> Self {
        Self {
            kind: RowKind::Replication,
            sweep_param: None,
            sweep_value: None,
            policy: Some(policy),
            replication: Some(index),
            seed: Some(seed),
            config_hash: config_hash.to_string(),
            n_states: None,
            residual: None,
            metrics,
            ci95: None,
        }
    }

    /// `base_seed` is the seed replication seeds were derived from.
    pub fn aggregate(config_hash: &str, policy: PolicyKind, base_seed: u64, summary: &Summary) -> Self {
        Self {
            kind: RowKind::Aggregate,
            sweep_param: None,
            sweep_value: None,
            policy: Some(policy),
            replication: None,
            seed: Some(base_seed),
            config_hash: config_hash.to_string(),
            n_states: None,
            residual: None,
            metrics: summary.mean,
            ci95: Some(summary.ci95),
        }
    }

    pub fn with_sweep(mut self, param: &str, value: &str) -> Self {
        self.sweep_param = Some(param.to_string());
        self.sweep_value = Some(value.to_string());
        self
    }

    pub fn fields(&self) -> Vec<String> {
        let opt = |v: Option<String>| v.unwrap_or_default();
        let mut out = vec![
            self.kind.name().to_string(),
            opt(self.sweep_param.clone()),
            opt(self.sweep_value.clone()),
            opt(self.policy.map(|p| p.name().to_string())),
            opt(self.replication.map(|r| r.to_string())),
            opt(self.seed.map(|s| s.to_string())),
            self.config_hash.clone(),
            opt(self.n_states.map(|n| n.to_string())),
            opt(self.residual.map(format_number)),
        ];
        out.extend(self.metrics.values().iter().map(|&v| format_number(v)));
        match &self.ci95 {
            Some(ci) => out.extend(ci.values().iter().map(|&v| format_number(v))),
            None => out.extend(METRIC_COLUMNS.iter().map(|_| String::new())),
        }
        out.push(self.metrics.flags.label());
        out
    }

    pub fn to_line(&self) -> String {
        self.fields().join(",")
    }
}

pub fn write_csv<W: Write>(mut out: W, rows: &[CsvRow]) -> io::Result<()> {
    writeln!(out, "{}", header().join(","))?;
    for row in rows {
        writeln!(out, "{}", row.to_line())?;
    }
    out.flush()
}
