use std::path::Path;
use std::process::{Command, Output};
use tempfile::TempDir;

fn sathet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sathet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

/// Header and data rows, split on commas.
fn table(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines().map(|l| l.split(',').map(str::to_string).collect::<Vec<_>>());
    let header = lines.next().expect("header row");
    (header, lines.collect())
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

#[test]
fn analyze_writes_one_row_and_a_summary() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("a.csv");
    let o = sathet(&["analyze", "--output", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("states 420") && stderr.contains("residual"), "{stderr}");

    let (header, rows) = table(&out);
    assert_eq!(header.len(), 52);
    assert_eq!(header[0], "row_kind");
    assert_eq!(header.last().unwrap(), "flags");
    assert_eq!(rows.len(), 1);
    assert!(rows.iter().all(|r| r.len() == header.len()));
    assert_eq!(rows[0][0], "analytic");
    assert_eq!(rows[0][column(&header, "n_states")], "420");
    let residual: f64 = rows[0][column(&header, "residual")].parse().unwrap();
    assert!(residual <= 1e-10);
    let g: f64 = rows[0][column(&header, "g_hu_bps")].parse().unwrap();
    assert!(g > 0.0);
}

#[test]
fn analyze_output_is_byte_stable() {
    let a = sathet(&["analyze"]);
    let b = sathet(&["analyze"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn simulate_emits_replications_then_an_aggregate() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("s.csv");
    let args = [
        "simulate",
        "--policy",
        "lru",
        "--seed",
        "7",
        "--replications",
        "3",
        "--horizon",
        "60",
        "--output",
        out.to_str().unwrap(),
    ];
    assert!(sathet(&args).status.success());
    let first = std::fs::read(&out).unwrap();
    let (header, rows) = table(&out);
    assert_eq!(rows.len(), 4);
    let kind: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(kind, ["replication", "replication", "replication", "aggregate"]);
    let policy = column(&header, "policy");
    assert!(rows.iter().all(|r| r[policy] == "lru"));
    let seed = column(&header, "seed");
    assert_eq!(rows[3][seed], "7");
    assert!(rows[..3].iter().all(|r| !r[seed].is_empty()));
    let ci = column(&header, "g_hu_bps_ci95");
    assert!(rows[..3].iter().all(|r| r[ci].is_empty()));
    assert!(rows[3][ci].parse::<f64>().unwrap() >= 0.0);

    assert!(sathet(&args).status.success());
    assert_eq!(std::fs::read(&out).unwrap(), first);
}

#[test]
fn sweep_tags_rows_and_goodput_rises_with_demand() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("w.csv");
    let o = sathet(&[
        "sweep",
        "--sweep-param",
        "lambda_hu",
        "--sweep-values",
        "0.4, 1.2,2.4",
        "--output",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = table(&out);
    assert_eq!(rows.len(), 3);
    let (p, v, g) = (
        column(&header, "sweep_param"),
        column(&header, "sweep_value"),
        column(&header, "g_hu_bps"),
    );
    let values: Vec<&str> = rows.iter().map(|r| r[v].as_str()).collect();
    assert_eq!(values, ["0.4", "1.2", "2.4"]);
    assert!(rows.iter().all(|r| r[p] == "lambda_hu"));
    let g: Vec<f64> = rows.iter().map(|r| r[g].parse().unwrap()).collect();
    assert!(g.windows(2).all(|w| w[0] <= w[1]), "{g:?}");
}

#[test]
fn sweep_can_simulate_every_point() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("w.csv");
    let o = sathet(&[
        "sweep",
        "--sweep-param",
        "weight_dev",
        "--sweep-values",
        "0.2,0.4",
        "--simulate",
        "--replications",
        "2",
        "--horizon",
        "30",
        "--output",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (_, rows) = table(&out);
    let kind: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(
        kind,
        ["analytic", "replication", "replication", "aggregate"].repeat(2)
    );
}

#[test]
fn config_values_override_defaults() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.json", r#"{"lambda_hu": 0.8}"#);
    let base = sathet(&["analyze"]);
    let o = sathet(&["analyze", "--config", &cfg]);
    assert!(o.status.success());
    assert_ne!(o.stdout, base.stdout);
}

#[test]
fn invalid_configuration_exits_with_2() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "w.json", r#"{"weight_sat": 0.5, "weight_bs": 0.6, "weight_dev": -0.1}"#);
    let o = sathet(&["analyze", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("weight"));

    let cfg = write(&dir, "d.json", r#"{"d_max": 300}"#);
    assert_eq!(sathet(&["analyze", "--config", &cfg]).status.code(), Some(2));

    let cfg = write(&dir, "m.json", "{not json");
    assert_eq!(sathet(&["analyze", "--config", &cfg]).status.code(), Some(2));

    let missing = dir.path().join("absent.json");
    assert_eq!(
        sathet(&["analyze", "--config", missing.to_str().unwrap()]).status.code(),
        Some(2)
    );
    assert_eq!(
        sathet(&["sweep", "--sweep-param", "no_such_key", "--sweep-values", "1"]).status.code(),
        Some(2)
    );
    assert_eq!(sathet(&["simulate", "--replications", "0"]).status.code(), Some(2));
}

#[test]
fn unattainable_tolerance_exits_with_3() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "t.json", r#"{"n_contents": 8, "solver_tolerance": 1e-30}"#);
    let o = sathet(&["analyze", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}
