//! End-to-end runs of the `mwcalc` binary against the shipped configs.

use std::path::PathBuf;
use std::process::{Command, Output};

use tempfile::TempDir;

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mwcalc")).args(args).output().unwrap()
}

fn run_config(name: &str, extra: &[&str]) -> Output {
    let path = config(name);
    let mut args = vec!["--config", path.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn validate_reports_json_and_passes_on_padic() {
    let out = run_config("dyadic_square.toml", &["validate"]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["pass"], true);
    assert_eq!(report["map_count"], 2);
}

#[test]
fn broken_systems_exit_with_property_failure() {
    for (name, flag) in [
        ("broken_beta_sum.toml", "beta_sum"),
        ("broken_overlap.toml", "h2_overlap"),
        ("broken_negative_tile.toml", "h3_nonnegative"),
    ] {
        let out = run_config(name, &["validate"]);
        assert_eq!(out.status.code(), Some(1), "{name}");
        let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
        assert_eq!(report["pass"], false);
        assert!(String::from_utf8_lossy(&out.stderr).contains(flag), "{name}");
    }
}

#[test]
fn iterate_writes_csv_with_closed_form_values() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("iterates.csv");
    let out = run_config("dyadic_square.toml", &["--out", csv.to_str().unwrap(), "iterate"]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "x1,p,value,bound,bound_source");
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    assert_eq!(rows.len(), 7 * 11);
    for row in rows {
        let x: f64 = row[0].parse().unwrap();
        let p: i32 = row[1].parse().unwrap();
        let value: f64 = row[2].parse().unwrap();
        let scale = 0.5f64.powi(p);
        assert!((value - (scale * x * x + (1.0 - scale) * x)).abs() < 1e-12);
    }
}

#[test]
fn missing_and_malformed_configs_exit_with_config_error() {
    let out = run(&["--config", "/nonexistent/config.toml", "validate"]);
    assert_eq!(out.status.code(), Some(2));

    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[shape]\nr = 1\ns = 1\n[ifs]\nkind = \"padic\"\nbase = 1\n").unwrap();
    let out = run(&["--config", bad.to_str().unwrap(), "validate"]);
    assert_eq!(out.status.code(), Some(2));

    let out = run_config("invariance_lebesgue.toml", &["iterate"]);
    assert_eq!(out.status.code(), Some(2), "missing section");
}

#[test]
fn exhausted_budget_exits_with_budget_code() {
    let out = run_config("dyadic_square.toml", &["--budget", "16", "iterate"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("budget"));
}

#[test]
fn invariance_distinguishes_lebesgue_from_square() {
    let dir = TempDir::new().unwrap();
    let table = dir.path().join("table.csv");
    let out = run_config("invariance_lebesgue.toml", &["invariance", "--table", table.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(&table).unwrap().lines().count(), 1 + 101);

    let out = run_config("invariance_square.toml", &["invariance"]);
    assert_eq!(out.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["coherent"], true);
    let residual = report["verdicts"][0]["residual"].as_f64().unwrap();
    assert!((residual - 0.125).abs() < 1e-10);
}

#[test]
fn orbit_bins_sum_to_step_count() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("orbit.toml");
    std::fs::write(
        &cfg,
        "[shape]\nr = 1\ns = 1\n[ifs]\nkind = \"padic\"\nbase = 2\n[orbit]\nx0 = [\"0.35424971\"]\nsteps = 5000\nbins_per_axis = 4\n",
    )
    .unwrap();
    let out = run(&["--config", cfg.to_str().unwrap(), "orbit"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let counts: u64 = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').rev().nth(1).unwrap().parse::<u64>().unwrap())
        .sum();
    assert_eq!(text.lines().count(), 1 + 4);
    assert_eq!(counts, 5000);
}

#[test]
fn admissible_points_lie_in_the_tile() {
    let out = run_config("quadrant_product.toml", &["admissible"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert!(!rows.is_empty());
    for row in rows {
        for v in row.split(',') {
            let v: f64 = v.parse().unwrap();
            assert!((0.0..=1.0).contains(&v));
        }
    }
}

#[test]
fn limit_agrees_with_the_average_gradient() {
    let out = run_config("quadrant_product.toml", &["limit"]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!((report["average_gradient"]["coeffs"][0].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert_eq!(report["all_certified"], true);
}

#[test]
fn fixed_point_rejects_planar_linear_field() {
    let out = run_config("quadrant_planar.toml", &["fixed-point"]);
    assert_eq!(out.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["is_fixed"], false);
}
