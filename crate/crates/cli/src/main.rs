//! Command-line front end: analyze, simulate and sweep a configuration and
//! write the results as CSV.

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use sathet::analysis::AnalysisError;
use sathet::experiment::{parse_values, run_sweep, simulate_rows, ExperimentError, SimulationPlan, SweepSpec};
use sathet::report::{write_csv, CsvRow, RowKind};
use sathet::{load_config, Analyzer, ConfigError, PolicyKind, SystemParams};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "sathet", version, about = "Cached satellite-terrestrial network with cognitive D2D overlay")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the analytic model once.
    Analyze(Common),
    /// Run simulation replications plus an aggregate row.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sim: SimFlags,
    },
    /// Analyze (and optionally simulate) every value of one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sim: SimFlags,
        /// JSON key of the swept parameter.
        #[arg(long)]
        sweep_param: String,
        /// Comma separated values.
        #[arg(long)]
        sweep_values: String,
        /// Also simulate each point.
        #[arg(long)]
        simulate: bool,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// JSON configuration; missing keys take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV destination, stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimFlags {
    #[arg(long, default_value = "pac")]
    policy: PolicyKind,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replications: Option<usize>,
    /// Seconds of simulated time per replication.
    #[arg(long)]
    horizon: Option<f64>,
}

impl Common {
    fn params(&self) -> Result<SystemParams, ConfigError> {
        match &self.config {
            Some(path) => load_config(path),
            None => Ok(SystemParams::default()),
        }
    }

    fn emit(&self, rows: &[CsvRow]) -> Result<()> {
        match &self.output {
            Some(path) => {
                let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
                write_csv(BufWriter::new(file), rows)?;
            }
            None => write_csv(io::stdout().lock(), rows)?,
        }
        Ok(())
    }
}

impl SimFlags {
    fn apply(&self, params: SystemParams) -> Result<(SystemParams, SimulationPlan), ConfigError> {
        let mut p = params;
        if let Some(s) = self.seed {
            p.seed = s;
        }
        if let Some(n) = self.replications {
            p.replications = n;
        }
        if let Some(h) = self.horizon {
            p.horizon_sec = h;
        }
        p.validate()?;
        let plan = SimulationPlan::from_params(&p, self.policy);
        Ok((p, plan))
    }
}

fn summarize(rows: &[CsvRow]) {
    let mut err = io::stderr().lock();
    for r in rows {
        let m = &r.metrics;
        let mut line = format!("{:<11}", r.kind.name());
        if let (Some(k), Some(v)) = (&r.sweep_param, &r.sweep_value) {
            line += &format!(" {k}={v}");
        }
        match r.kind {
            RowKind::Analytic => {
                line += &format!(
                    " states {} residual {:.2e}",
                    r.n_states.unwrap_or(0),
                    r.residual.unwrap_or(f64::NAN)
                );
            }
            RowKind::Replication => continue,
            RowKind::Aggregate => {
                line += &format!(" policy {}", r.policy.map(|p| p.name()).unwrap_or("-"));
            }
        }
        line += &format!(" g_hu {:.3} Mbps epb {:.4} uJ/bit", m.g_hu / 1e6, m.epb * 1e6);
        if let Some(ci) = &r.ci95 {
            line += &format!(" (g_hu ±{:.3})", ci.g_hu / 1e6);
        }
        if m.flags.any() {
            line += &format!(" [{}]", m.flags.label());
        }
        let _ = writeln!(err, "{line}");
    }
    if let Some(hash) = rows.first().map(|r| &r.config_hash) {
        let _ = writeln!(err, "config {hash}");
    }
}

fn run(cli: Cli) -> Result<()> {
    let analyzer = Analyzer::new();
    match cli.command {
        Command::Analyze(common) => {
            let params = common.params()?;
            let analysis = analyzer.analyze(&params)?;
            let rows = vec![CsvRow::analytic(&analysis)];
            summarize(&rows);
            common.emit(&rows)
        }
        Command::Simulate { common, sim } => {
            let (params, plan) = sim.apply(common.params()?)?;
            let rows = simulate_rows(&params, &plan)?;
            summarize(&rows);
            common.emit(&rows)
        }
        Command::Sweep {
            common,
            sim,
            sweep_param,
            sweep_values,
            simulate,
        } => {
            let (params, plan) = sim.apply(common.params()?)?;
            let spec = SweepSpec {
                param: sweep_param,
                values: parse_values(&sweep_values),
                simulate: simulate.then_some(plan),
            };
            if spec.values.is_empty() {
                return Err(ConfigError::Validation {
                    field: "sweep-values".into(),
                    reason: "no values given".into(),
                }
                .into());
            }
            let rows = run_sweep(&analyzer, &params, &spec)?;
            summarize(&rows);
            common.emit(&rows)
        }
    }
}

/// 2 for configuration problems, 3 when the solver fails, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    let analysis = |e: &AnalysisError| match e {
        AnalysisError::Solver(_) => 3,
        AnalysisError::Model(_) => 2,
    };
    if err.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    if let Some(e) = err.downcast_ref::<AnalysisError>() {
        return analysis(e);
    }
    match err.downcast_ref::<ExperimentError>() {
        Some(ExperimentError::Config(_)) => 2,
        Some(ExperimentError::Analysis(e)) => analysis(e),
        _ => 1,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
