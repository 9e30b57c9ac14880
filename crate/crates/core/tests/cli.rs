use std::path::Path;
use std::process::{Command, Output};

fn ouneumann(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ouneumann")).args(args).output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn solve_constant_data() {
    let dir = tempfile::tempdir().unwrap();
    let out = ouneumann(&["solve", "--lambda", "2", "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = read_json(&dir.path().join("report.json"));
    assert_eq!(r["passed"], true);
    for key in ["u_min", "u_max", "u_mean"] {
        assert!((r["result"][key].as_f64().unwrap() - 0.5).abs() < 1e-10);
    }
}

#[test]
fn verify_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let out = ouneumann(&["verify", "--seed", "3", "--out", path(d)]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["report.json", "checks.csv"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
    let csv = std::fs::read_to_string(a.join("checks.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), format!("# version={}", env!("CARGO_PKG_VERSION")));
    assert!(lines.next().unwrap().starts_with("# config_hash="));
    assert_eq!(lines.next().unwrap(), "name,kind,lhs,rhs,residual_or_slack,tolerance,pass");
}

#[test]
fn sweep_writes_flat_ratio_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    std::fs::write(
        &cfg,
        "[rhs]\nkind = \"gaussian_bump\"\ncenter = [-0.4]\nwidth = 0.6\namplitude = 1.0\n\n[sweep]\nmodes = 3\n",
    )
    .unwrap();
    let out = ouneumann(&["sweep", "--config", path(&cfg), "--dims", "1..4", "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 4);
    for col in 2..6 {
        let vals: Vec<f64> = rows.iter().map(|r| r[col].parse().unwrap()).collect();
        let scale = vals.iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(vals.iter().all(|v| (v - vals[0]).abs() <= 1e-6 * scale.max(1e-12)), "{vals:?}");
    }
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, format!("lambda = 4.0\noutput_dir = \"{}\"\n", path(&dir.path().join("from_file")))).unwrap();
    let out = ouneumann(&["solve", "--config", path(&cfg)]);
    assert_eq!(out.status.code(), Some(0));
    let r = read_json(&dir.path().join("from_file/report.json"));
    assert!((r["result"]["u_max"].as_f64().unwrap() - 0.25).abs() < 1e-10);
    let flagged = dir.path().join("flag");
    let out = ouneumann(&["solve", "--config", path(&cfg), "--lambda", "0.5", "--out", path(&flagged)]);
    assert_eq!(out.status.code(), Some(0));
    let r = read_json(&flagged.join("report.json"));
    assert!((r["result"]["u_max"].as_f64().unwrap() - 2.0).abs() < 1e-10);
}

#[test]
fn csv_format_and_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("o.toml");
    std::fs::write(&cfg, "[domain]\nkind = \"slab\"\nnormal = [1.0]\nhalf_width = 1.0\n\n[oracle]\nn_paths = 500\ndt = 0.01\n")
        .unwrap();
    let out = ouneumann(&["oracle", "--config", path(&cfg), "--format", "csv", "--seed", "9", "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(text.lines().nth(2).unwrap().starts_with("value,std_error"));
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("x");
    assert_eq!(ouneumann(&["solve", "--lambda", "-1", "--out", path(&out_dir)]).status.code(), Some(2));
    assert_eq!(ouneumann(&["solve", "--resolution", "2", "--out", path(&out_dir)]).status.code(), Some(2));
    assert_eq!(ouneumann(&["sweep", "--dims", "3..1", "--out", path(&out_dir)]).status.code(), Some(2));
    assert_eq!(ouneumann(&["solve", "--config", "/nonexistent.toml"]).status.code(), Some(2));
    assert_eq!(ouneumann(&["frobnicate"]).status.code(), Some(2));
    assert!(!out_dir.exists());
}

#[test]
fn solver_failures_exit_with_three_and_report_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[domain]\nkind = \"ball\"\ncenter = [0.5, 0.0]\nradius = 1.0\n").unwrap();
    let out = ouneumann(&["solve", "--config", path(&cfg), "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["status"], "run_failed");
    assert!(err["error"].as_str().unwrap().contains("unsupported"));
}

#[test]
fn failed_checks_exit_with_one_and_list_failures() {
    // Projection reflection is biased at order sqrt(dt); at dt = 0.016 the bias
    // on the unit disk is about 0.25, well beyond the agreement budget.
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(
        &cfg,
        r#"
[domain]
kind = "ball"
center = [0.0, 0.0]
radius = 1.0

[rhs]
kind = "polynomial"
terms = [
  { coeff = 1.25, powers = [4, 0] },
  { coeff = 2.5, powers = [2, 2] },
  { coeff = 1.25, powers = [0, 4] },
  { coeff = -5.5, powers = [2, 0] },
  { coeff = -5.5, powers = [0, 2] },
  { coeff = 2.0, powers = [0, 0] },
]

[oracle]
x0 = [0.5, 0.0]
n_paths = 4000
dt = 0.016
reflection = "projection"
"#,
    )
    .unwrap();
    let out = ouneumann(&["oracle", "--config", path(&cfg), "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["failures"], serde_json::json!(["oracle_agreement"]));
    let r = read_json(&dir.path().join("report.json"));
    assert_eq!(r["passed"], false);
    assert_eq!(r["failures"], serde_json::json!(["oracle_agreement"]));
}
