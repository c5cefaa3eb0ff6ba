use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn hkbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hkbench"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_equidistant_three() {
    let out = hkbench(&["simulate", "--gen", "equidistant", "--n", "3", "--controller", "passive", "--mode", "rational"]);
    assert_eq!(out.status.code(), Some(0));
    let rec = json(&out);
    assert_eq!(rec["convergence_time"], 2);
    assert!(rec["monitor_report"].as_array().unwrap().iter().all(|m| m["passed"] == true));
}

#[test]
fn mass_on_converged_file_takes_zero_steps() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("f.json");
    std::fs::write(
        &file,
        r#"{"name": "flat", "mode": "rational", "n": 3, "m": 0, "opinions": ["0/1", "0/1", "5/2"], "params": {}}"#,
    )
    .unwrap();
    let out = hkbench(&["simulate", "--instance", path(&file), "--controller", "mass"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rec = json(&out);
    assert_eq!(rec["convergence_time"], 0);
    assert_eq!(rec["m"], 27);
}

#[test]
fn dumbbell_trajectory_file_has_exact_values() {
    let dir = tempfile::tempdir().unwrap();
    let traj = dir.path().join("traj.csv");
    let rec = dir.path().join("rec.json");
    let out = hkbench(&[
        "simulate", "--gen", "dumbbell", "--k", "12", "--controller", "dumbbell",
        "--trajectory", path(&traj), "--out", path(&rec),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(&traj).unwrap();
    assert!(csv.starts_with("t,agent_kind,agent_index,opinion\n"));
    // strategic agent at 2, then at k - 2
    assert!(csv.contains("\n0,S,1,2/1\n"));
    assert!(csv.contains("\n1,S,1,10/1\n"));
    // x_{k+2}(1) = 5/4, x_{k+2}(2) = 13/8, x_{2k+1}(2) = k - 1/((k+1)(k+2)) = 2183/182
    assert!(csv.contains("\n1,N,14,5/4\n"));
    assert!(csv.contains("\n2,N,14,13/8\n"));
    assert!(csv.contains("\n2,N,25,2183/182\n"));
    assert!(csv.contains("\n2,N,23,10/1\n"));
    let rec: Value = serde_json::from_str(&std::fs::read_to_string(&rec).unwrap()).unwrap();
    assert!(rec["convergence_time"].as_u64().unwrap() > 2);
}

#[test]
fn exit_codes() {
    let out = hkbench(&["simulate", "--gen", "equidistant", "--n", "40", "--max-steps", "3"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(json(&out)["convergence_time"], "NOT_CONVERGED");
    assert_eq!(hkbench(&["simulate"]).status.code(), Some(2));
    assert_eq!(hkbench(&["simulate", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(hkbench(&["simulate", "--gen", "dumbbell", "--k", "5"]).status.code(), Some(2));
    assert_eq!(hkbench(&["verify", "nonsense"]).status.code(), Some(2));
    let out = hkbench(&["simulate", "--gen", "equidistant", "--n", "5", "--controller", "mass", "--m", "3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bench_equidistant_window_and_refit() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("rows.csv");
    let summary = dir.path().join("summary.json");
    let out = hkbench(&[
        "bench", "--gen", "equidistant", "--sizes", "120,240,480", "--controller", "passive",
        "--m", "0", "--workers", "3", "--out", path(&csv), "--summary", path(&summary),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,m,generator,controller,convergence_time,steps,wall_ms"));
    let ns: Vec<u64> = lines
        .map(|l| {
            let cols: Vec<&str> = l.split(',').collect();
            let n: u64 = cols[0].parse().unwrap();
            let t: u64 = cols[4].parse().unwrap();
            let ratio = t as f64 / n as f64;
            assert!((0.78..=0.90).contains(&ratio), "n={n} T={t}");
            n
        })
        .collect();
    assert_eq!(ns, vec![120, 240, 480]);

    let first: Value = serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
    let refit = hkbench(&["bench", "--refit", path(&csv)]);
    assert_eq!(refit.status.code(), Some(0));
    let second = json(&refit);
    let a = first["fit"]["exponent"].as_f64().unwrap();
    let b = second["fit"]["exponent"].as_f64().unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
}

#[test]
fn bench_dumbbell_growth_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("suite.json");
    std::fs::write(
        &cfg,
        r#"{"generator": "dumbbell", "sizes": [10, 15, 20, 25, 30, 35, 40],
            "controller": {"controller": "passive", "params": {}}, "m": 0}"#,
    )
    .unwrap();
    let summary = dir.path().join("summary.json");
    let out = hkbench(&["bench", "--config", path(&cfg), "--out", path(&dir.path().join("r.csv")), "--summary", path(&summary)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s: Value = serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
    assert!(s["fit"]["exponent"].as_f64().unwrap() >= 1.7);
}

#[test]
fn single_row_grid_has_no_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let summary = dir.path().join("summary.json");
    let out = hkbench(&[
        "bench", "--gen", "equidistant", "--sizes", "50", "--out", path(&dir.path().join("r.csv")),
        "--summary", path(&summary),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let s: Value = serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
    assert!(s["fit"].is_null());
    assert_eq!(s["rows"], 1);
}

#[test]
fn bench_rejects_bad_grid() {
    let out = hkbench(&["bench", "--gen", "equidistant", "--controller", "passive"]);
    assert_eq!(out.status.code(), Some(2));
    let out = hkbench(&["bench", "--gen", "equidistant", "--sizes", "10", "--controller", "mass", "--m", "2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_golden_and_not_too_fast() {
    let out = hkbench(&["verify", "golden", "not-too-fast", "--seeds", "100"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let reports = json(&out);
    let reports = reports.as_array().unwrap();
    assert_eq!(reports.len(), 2);
    assert!(reports.iter().all(|r| r["passed"] == true));
}

#[test]
fn search_not_too_fast_finds_no_one_step_win() {
    for m in ["1", "2", "3"] {
        let out = hkbench(&["search", "--gen", "not-too-fast", "--n", "5", "--m", m]);
        assert_eq!(out.status.code(), Some(0));
        assert_eq!(json(&out)["converged"], false);
    }
    let out = hkbench(&["search", "--gen", "equidistant", "--n", "9", "--m", "1"]);
    assert_eq!(out.status.code(), Some(1));
}
