use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn snse(args: &[&str], workers: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_snse"));
    cmd.args(args);
    if let Some(w) = workers {
        cmd.env("SNSE_WORKERS", w);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, name: &str, v: &Value) -> String {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p.to_str().unwrap().to_string()
}

fn base() -> Value {
    json!({
        "schema": "snse-config/1",
        "nu": 1.0,
        "sigma": 1.0,
        "horizon": 1.0,
        "n_steps": 128,
        "max_wavenumber": 2,
        "n_paths": 4,
        "seed": 3
    })
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let (h, rows) = csv_rows(path);
    let i = h.iter().position(|c| c == name).unwrap();
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

#[test]
fn replay_from_embedded_config_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = base();
    cfg["y_spec"] = json!({
        "times": [1.0],
        "components": [{"mode": 0, "expr": {"op": "sin", "arg": {"op": "arg", "index": 0}}}]
    });
    cfg["levels"] = json!([64, 128]);
    let c = write_config(dir.path(), "c.json", &cfg);
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    for sub in ["anticipating-check", "malliavin-check", "ensemble"] {
        let out1 = first.join(sub);
        let out2 = second.join(sub);
        let o = snse(&[sub, "--config", &c, "--seed", "11", "--out", out1.to_str().unwrap()], Some("3"));
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let replay = out1.join("config.json");
        let o = snse(
            &[sub, "--config", replay.to_str().unwrap(), "--out", out2.to_str().unwrap()],
            Some("1"),
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        for f in ["config.json", "report.csv", "report.ndjson"] {
            assert_eq!(fs::read(out1.join(f)).unwrap(), fs::read(out2.join(f)).unwrap(), "{sub}/{f}");
        }
        let header: Value = serde_json::from_str(
            fs::read_to_string(out1.join("report.ndjson")).unwrap().lines().next().unwrap(),
        )
        .unwrap();
        assert_eq!(header["seed"], 11);
        assert_eq!(header["config"]["seed"], 11);
    }
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = base();
    cfg["nu"] = json!(-1.0);
    let c = write_config(dir.path(), "bad.json", &cfg);
    let o = snse(&["ensemble", "--config", &c, "--out", dir.path().to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1));
    let rec: Value = serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).unwrap();
    assert_eq!(rec["record"], "error");
    assert_eq!(rec["kind"], "config");

    let mut cfg = base();
    cfg.as_object_mut().unwrap().remove("sigma");
    cfg["sigmas"] = json!([0.0, 0.0]);
    let c = write_config(dir.path(), "degenerate.json", &cfg);
    assert_eq!(snse(&["ensemble", "--config", &c], None).status.code(), Some(1));

    assert_eq!(snse(&["ensemble", "--config", "/nonexistent.json"], None).status.code(), Some(1));
    assert_eq!(snse(&["no-such-command"], None).status.code(), Some(1));
    let c = write_config(dir.path(), "ok.json", &base());
    assert_eq!(snse(&["ensemble", "--config", &c], Some("zero")).status.code(), Some(1));
}

#[test]
fn unstable_paths_beyond_policy_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = base();
    cfg["nu"] = json!(0.01);
    cfg["n_steps"] = json!(4);
    cfg["initial"] = json!([
        {"k": [0, 1], "phase": "cos", "amplitude": 500.0},
        {"k": [1, 1], "phase": "cos", "amplitude": 400.0}
    ]);
    let c = write_config(dir.path(), "c.json", &cfg);
    let out = dir.path().join("out");
    let o = snse(&["ensemble", "--config", &c, "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
    let text = fs::read_to_string(out.join("report.ndjson")).unwrap();
    assert!(text.lines().filter(|l| l.contains("\"record\":\"failure\"")).count() >= 1);
}

#[test]
fn deterministic_anticipating_check_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = base();
    cfg["sigma"] = json!(0.0);
    cfg["levels"] = json!([128]);
    let c = write_config(dir.path(), "c.json", &cfg);
    let out = dir.path().join("out");
    let o = snse(&["anticipating-check", "--config", &c, "--out", out.to_str().unwrap()], None);
    assert!(o.status.success());
    let rel = column(&out.join("report.csv"), "relative_ito");
    assert_eq!(rel.len(), 4 * 3);
    assert!(rel.iter().all(|r| *r <= 1e-10), "{rel:?}");
}

#[test]
fn single_mode_convergence_table_halves() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = base();
    cfg["max_wavenumber"] = json!(1);
    cfg["initial"] = json!([{"mode": 0, "amplitude": 1.0}]);
    cfg["n_paths"] = json!(16);
    cfg["levels"] = json!([1024, 2048, 4096, 8192]);
    let c = write_config(dir.path(), "c.json", &cfg);
    let out = dir.path().join("out");
    assert!(snse(&["convergence", "--config", &c, "--out", out.to_str().unwrap()], None).status.success());
    assert_eq!(column(&out.join("report.csv"), "gap").len(), 16 * 4);
    let text = fs::read_to_string(out.join("report.ndjson")).unwrap();
    let summary: Value = serde_json::from_str(text.lines().last().unwrap()).unwrap();
    let gaps: Vec<f64> = summary["summary"]["mean_gap"]
        .as_array()
        .unwrap()
        .iter()
        .map(|g| g.as_f64().unwrap())
        .collect();
    for w in gaps.windows(2) {
        let r = w[0] / w[1];
        assert!((1.6..=2.6).contains(&r), "{gaps:?}");
    }
}

#[test]
fn b_audit_and_energy_audit_reports() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = base();
    cfg["b_samples"] = json!(200);
    let c = write_config(dir.path(), "c.json", &cfg);
    let out = dir.path().join("b");
    assert!(snse(&["b-audit", "--config", &c, "--out", out.to_str().unwrap()], None).status.success());
    let (_, rows) = csv_rows(&out.join("report.csv"));
    assert_eq!(rows.len(), 7);
    let out = dir.path().join("e");
    assert!(snse(&["energy-audit", "--config", &c, "--out", out.to_str().unwrap()], None).status.success());
    let text = fs::read_to_string(out.join("report.ndjson")).unwrap();
    let summary: Value = serde_json::from_str(text.lines().last().unwrap()).unwrap();
    assert_eq!(summary["summary"]["n_within_slack"], 4);
}
