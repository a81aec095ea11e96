use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_anharmonic-probe")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().unwrap()
}

/// Data rows of a CSV output: header line checked, comment skipped.
fn rows(csv: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("# schema=1"));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let body = lines
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    (header, body)
}

fn col(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap()
}

const RATIO: &str = r#"{
  "command": "ratio-curve",
  "params": {"lambda": 1.5e-5, "gamma": 1e-25, "delta": 1e-25},
  "sweep": {"axis": "n_p", "values": [2, 5, 10, 20, 30]},
  "seed": 3
}"#;

#[test]
fn ratio_curve_rows_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "ratio.json", RATIO);
    let out1 = dir.path().join("a.csv");
    let out2 = dir.path().join("b.csv");
    let c = cfg.to_str().unwrap();
    let o = run(&["ratio-curve", "--config", c, "--out", out1.to_str().unwrap(), "--threads", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(&["ratio-curve", "--config", c, "--out", out2.to_str().unwrap(), "--threads", "4"]);
    assert!(o.status.success());
    let a = std::fs::read(&out1).unwrap();
    assert_eq!(a, std::fs::read(&out2).unwrap());

    let (header, body) = rows(std::str::from_utf8(&a).unwrap());
    assert_eq!(header, ["n_p", "kind", "phi_star", "fi", "qfi", "ratio"]);
    assert_eq!(body.len(), 10);
    let r = col(&header, "ratio");
    for kind in ["quartic", "cubic"] {
        let ratios: Vec<f64> = body
            .iter()
            .filter(|row| row[1] == kind)
            .map(|row| row[r].parse().unwrap())
            .collect();
        assert_eq!(ratios.len(), 5);
        assert!(ratios.windows(2).all(|w| w[1] > w[0]), "{kind}: {ratios:?}");
    }
}

#[test]
fn empty_sweep_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"sweep": {"axis": "n_p", "values": []}}"#,
    );
    let o = run(&["ratio-curve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no values"));

    let bad = write_config(dir.path(), "d.json", r#"{"sweeep": 1}"#);
    assert_eq!(run(&["qfi-table", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
    let missing = dir.path().join("missing.json");
    assert_eq!(run(&["qfi-table", "--config", missing.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn qfi_table_headline_and_vacuum_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "q.json",
        r#"{
          "params": {"lambda": 1e-4, "gamma": 1e-20, "delta": 1e-15},
          "sweep": {"axis": "n_p", "values": [1e9, 0, 4]},
          "qfi": {"m": 10000}
        }"#,
    );
    let o = run(&["qfi-table", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, body) = rows(std::str::from_utf8(&o.stdout).unwrap());
    assert_eq!(body.len(), 6);
    let snr = col(&header, "snr_leading");
    let headline: f64 = body[0][snr].parse().unwrap();
    assert!((headline - 1.6e-4).abs() < 1e-12);
    assert_eq!(body[0][col(&header, "qfi_numeric")], "");
    for row in &body[2..4] {
        assert_eq!(row[col(&header, "qfi_closed")], "0.0");
        assert_eq!(row[col(&header, "qfi_numeric")], "0.0");
        assert_eq!(row[snr], "0.0");
        assert_eq!(row[col(&header, "crb")], "inf");
    }
    let closed: f64 = body[4][col(&header, "qfi_closed")].parse().unwrap();
    let numeric: f64 = body[4][col(&header, "qfi_numeric")].parse().unwrap();
    assert!((numeric / closed - 1.0).abs() < 1e-8);
}

#[test]
fn validate_map_emits_three_rows_per_strength() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "v.json",
        r#"{
          "params": {"lambda": 0.1, "alpha": [1.5, 0], "dim_c": 18, "dim_m": 20},
          "kinds": ["quartic"],
          "sweep": {"axis": "gamma", "values": [0, 4e-3]}
        }"#,
    );
    let o = run(&["validate-map", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, body) = rows(std::str::from_utf8(&o.stdout).unwrap());
    assert_eq!(header[0], "gamma");
    assert_eq!(body.len(), 6);
    let d = col(&header, "deficit");
    for row in &body[..3] {
        assert!(row[d].parse::<f64>().unwrap() < 1e-8);
    }
    let r: f64 = body[3][col(&header, "deficit_ratio")].parse().unwrap();
    assert!((3.5..=4.5).contains(&r), "{r}");
    assert_eq!(body[5][col(&header, "deficit_ratio")], "");
}

#[test]
fn losses_rows_track_the_formula() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "l.json",
        r#"{
          "params": {"lambda": 0.1, "gamma": 1e-3, "nbar": 0.2, "alpha": [1.5, 0], "dim_c": 18, "dim_m": 28},
          "kinds": ["quartic"],
          "sweep": {"axis": "epsilon", "values": [0, 0.02, 0.05]},
          "output": {"format": "json"}
        }"#,
    );
    let o = run(&["losses", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["schema"], 1);
    let cols: Vec<&str> = v["columns"].as_array().unwrap().iter().map(|c| c.as_str().unwrap()).collect();
    let idx = |n: &str| cols.iter().position(|c| *c == n).unwrap();
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    let mut last_purity = f64::INFINITY;
    for r in rows {
        let phase = r[idx("harmonic_phase")].as_f64().unwrap();
        let formula = r[idx("harmonic_phase_formula")].as_f64().unwrap();
        assert!((phase - formula).abs() < 1e-6);
        let purity = r[idx("purity")].as_f64().unwrap();
        assert!(purity <= last_purity + 1e-12);
        last_purity = purity;
    }
}

#[test]
fn estimate_is_reproducible_under_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "e.json",
        r#"{
          "params": {"lambda": 0.1, "gamma": 1e-2, "n_p": 4, "dim_c": 26, "dim_m": 26},
          "kinds": ["quartic"],
          "estimate": {"m": 300, "repeats": 8, "bootstrap": 20, "rounds": 2, "samples_per_round": 2000}
        }"#,
    );
    let c = cfg.to_str().unwrap();
    let a = run(&["estimate", "--config", c, "--seed", "11"]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let b = run(&["estimate", "--config", c, "--seed", "11", "--threads", "2"]);
    let other = run(&["estimate", "--config", c, "--seed", "12"]);
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, other.stdout);
    let (header, body) = rows(std::str::from_utf8(&a.stdout).unwrap());
    let rec = col(&header, "record");
    assert_eq!(body[0][rec], "crb");
    assert_eq!(body.last().unwrap()[rec], "closure-final");
    assert!(body.iter().any(|r| r[rec] == "closure"));
}

#[test]
fn check_prints_validity_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "k.json",
        r#"{"params": {"lambda": 0.1, "gamma": 1e-3, "nbar": 5, "n_p": 9}, "kinds": ["quartic"]}"#,
    );
    let o = run(&["estimate", "--config", cfg.to_str().unwrap(), "--check"]);
    assert!(o.status.success());
    let (header, body) = rows(std::str::from_utf8(&o.stdout).unwrap());
    assert_eq!(body.len(), 1);
    assert_eq!(body[0][col(&header, "thermal_ok")], "false");
    assert_eq!(body[0][col(&header, "perturbative_ok")], "true");
}

#[test]
fn exit_codes_for_numerical_and_capability_failures() {
    let dir = tempfile::tempdir().unwrap();
    let big = write_config(
        dir.path(),
        "big.json",
        r#"{"params": {"alpha": [0.5, 0], "dim_c": 50, "dim_m": 40}, "kinds": ["cubic"]}"#,
    );
    assert_eq!(run(&["validate-map", "--config", big.to_str().unwrap()]).status.code(), Some(4));

    let strong = write_config(
        dir.path(),
        "strong.json",
        r#"{"params": {"lambda": 0.5, "gamma": 0.5, "n_p": 9}, "kinds": ["quartic"]}"#,
    );
    let s = strong.to_str().unwrap();
    assert!(run(&["qfi-table", "--config", s]).status.success());
    assert_eq!(run(&["losses", "--config", s, "--strict"]).status.code(), Some(3));
}
