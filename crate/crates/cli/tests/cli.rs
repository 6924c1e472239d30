use std::path::Path;
use std::process::{Command, Output};

fn herding(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_herding")).args(args).current_dir(dir).output().expect("binary runs")
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

fn data_rows(csv: &str) -> Vec<&str> {
    csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect()
}

#[test]
fn neuron_writes_rabbit_bits() {
    let d = tempfile::tempdir().unwrap();
    let out = herding(&["neuron", "--pi", "golden", "--w0", "rabbit", "--steps", "1000", "--out", "trace.csv"], d.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 1);
    assert!(stdout.contains("pct_violations=0"));
    let csv = read(d.path(), "trace.csv");
    let bits: String = data_rows(&csv).iter().skip(1).map(|r| r.split(',').nth(1).unwrap()).collect();
    let rabbit: String = herding::scalar::rabbit_sequence(1000).iter().map(u8::to_string).collect();
    assert_eq!(bits, rabbit);
}

#[test]
fn bifurcate_writes_one_row_per_temperature() {
    let d = tempfile::tempdir().unwrap();
    let out = herding(
        &["bifurcate", "--model", "random:D=4,K=2,seed=7", "--t-grid", "0.05:0.5:40", "--out", "bif.csv"],
        d.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(d.path(), "bif.csv");
    assert!(csv.lines().any(|l| l == "temperature,period"));
    let rows = data_rows(&csv);
    assert_eq!(rows.len(), 40);
    assert_eq!(rows.last().unwrap(), &"0.5,1");
}

#[test]
fn diagnose_report_has_unit_lag_zero_autocorrelation() {
    let d = tempfile::tempdir().unwrap();
    let out = herding(&["herd", "--model", "random:D=10,K=7,seed=3", "--steps", "3000", "--out", "t.csv"], d.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = herding(&["diagnose", "--trace", "t.csv", "--report", "report.json"], d.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep: serde_json::Value = serde_json::from_str(&read(d.path(), "report.json")).unwrap();
    assert_eq!(rep["R"][0], 1.0);
    assert_eq!(rep["steps"], 3000);
    assert!(rep["R"][1].as_f64().unwrap() < 0.0);
}

#[test]
fn config_file_is_overridden_by_flags_and_embedded() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("c.json"), r#"{"model": "one-hot:D=3", "steps": 50, "out": "t.csv"}"#).unwrap();
    let out = herding(&["herd", "--config", "c.json", "--steps", "70"], d.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(d.path(), "t.csv");
    let cfg_line = csv.lines().find(|l| l.starts_with("# config: ")).unwrap();
    let cfg: serde_json::Value = serde_json::from_str(&cfg_line["# config: ".len()..]).unwrap();
    assert_eq!(cfg["steps"], 70);
    assert_eq!(cfg["model"], "one-hot:D=3");
    assert_eq!(cfg["maximizer"], "exact");
    assert_eq!(data_rows(&csv).len(), 71);
}

#[test]
fn reruns_are_byte_identical() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let out = herding(&["herd", "--model", "random:D=6,K=3,seed=1", "--steps", "2000", "--out", "t.csv"], d.path());
        assert!(out.status.success());
    }
    assert_eq!(read(dirs[0].path(), "t.csv"), read(dirs[1].path(), "t.csv"));
}

#[test]
fn invalid_configuration_exits_1() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(herding(&["herd", "--steps", "0"], d.path()).status.code(), Some(1));
    assert_eq!(herding(&["herd", "--no-such-flag"], d.path()).status.code(), Some(1));
    assert_eq!(herding(&["bifurcate", "--t-grid", "0.5:0.1:3"], d.path()).status.code(), Some(1));
    std::fs::write(d.path().join("c.json"), r#"{"stepz": 5}"#).unwrap();
    assert_eq!(herding(&["herd", "--config", "c.json"], d.path()).status.code(), Some(1));
    std::fs::write(d.path().join("bad.csv"), "label,f1\n0,1.0\n1\n").unwrap();
    let out = herding(&["cond", "--train", "bad.csv"], d.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn strict_pct_violation_exits_2() {
    let d = tempfile::tempdir().unwrap();
    let args = ["ising", "--size", "8x8", "--edge-moment", "0.7", "--steps", "500"];
    assert_eq!(herding(&args, d.path()).status.code(), Some(0));
    let mut strict = args.to_vec();
    strict.push("--strict-pct");
    assert_eq!(herding(&strict, d.path()).status.code(), Some(2));
}

#[test]
fn pomrf_and_cond_run_end_to_end() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("v.csv"), "x1,x2\n1,-1\n-1,1\n").unwrap();
    let out = herding(&["pomrf", "--data", "v.csv", "--steps", "2000", "--report", "p.json"], d.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep: serde_json::Value = serde_json::from_str(&read(d.path(), "p.json")).unwrap();
    assert!(rep["moment_gap"].as_f64().unwrap() <= rep["moment_bound"].as_f64().unwrap());

    let data = herding::cond::banana(200, 0.1, 0);
    let mut csv = String::from("label,f1,f2\n");
    for (x, y) in data.inputs().iter().zip(data.labels()) {
        csv.push_str(&format!("{y},{},{}\n", x[0], x[1]));
    }
    std::fs::write(d.path().join("b.csv"), csv).unwrap();
    let out = herding(&["cond", "--train", "b.csv", "--steps", "300", "--burn-in", "50", "--report", "c.json"], d.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep: serde_json::Value = serde_json::from_str(&read(d.path(), "c.json")).unwrap();
    assert!(rep["test_error"].as_f64().unwrap() < 0.5);
}
