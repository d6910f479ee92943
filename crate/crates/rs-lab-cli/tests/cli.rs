use serde_json::Value;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rs_lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rs-lab")).args(args).output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn flow_to_one_gives_the_centered_interval() {
    let dir = tempfile::tempdir().unwrap();
    let set = dir.path().join("E.json");
    fs::write(&set, r#"{"parts": [[0.0, 1.0], [3.0, 3.5]]}"#).unwrap();
    let trace = dir.path().join("trace.csv");
    let out = rs_lab(&["flow", "--set", p(&set), "--t", "1", "--trace", p(&trace)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let parts = v["parts"].as_array().unwrap();
    assert_eq!(parts.len(), 1);
    assert!((parts[0][0].as_f64().unwrap() + 0.75).abs() < 1e-12);
    assert!((parts[0][1].as_f64().unwrap() - 0.75).abs() < 1e-12);
    let csv = fs::read_to_string(&trace).unwrap();
    assert!(csv.starts_with("T,t,interval_index,lo,hi\n"));
    assert!(csv.lines().count() > 2);

    let bad = rs_lab(&["flow", "--set", p(&set), "--t", "1.5"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn star_mask_feeds_steiner_and_distance() {
    let dir = tempfile::tempdir().unwrap();
    let mask = dir.path().join("a.rsm");
    let out = rs_lab(&["star", "--harmonic", "3", "--s", "0.05", "--emit", "mask", "--h", "0.03125", "--out", p(&mask)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(fs::read(&mask).unwrap().starts_with(b"RSMASK 2 0.03125 "));

    let conv = dir.path().join("conv.csv");
    let out = rs_lab(&["steiner", "--in", p(&mask), "--sweeps", "8", "--schedule", "golden", "--out-csv", p(&conv)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(&conv).unwrap();
    assert!(csv.starts_with("sweep,ux,uy,uz,sym_diff,ratio,count\n"));
    assert_eq!(csv.lines().count(), 9);

    let js = dir.path().join("d.json");
    let triple = format!("{0},{0},{0}", p(&mask));
    let out = rs_lab(&["distance", "--triple", &triple, "--budget", "300", "--json", p(&js)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&fs::read(&js).unwrap()).unwrap();
    assert!(v["value"].as_f64().unwrap() <= v["identity_value"].as_f64().unwrap());

    let two = format!("{0},{0}", p(&mask));
    assert_eq!(rs_lab(&["distance", "--triple", &two]).status.code(), Some(2));
    assert_eq!(rs_lab(&["steiner", "--in", p(&mask), "--schedule", "spiral"]).status.code(), Some(2));
}

#[test]
fn star_fields_and_balance() {
    let out = rs_lab(&["star", "--harmonic", "2", "--s", "0.05", "--emit", "fields"]);
    assert!(out.status.success());
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.starts_with("node,x,y,z,radius,F,F_plus,F_minus\n"));
    // A degree-2 field has zero mean on the default 512-node circle.
    let f: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(5).unwrap().parse().unwrap()).collect();
    assert_eq!(f.len(), 512);
    assert!(f.iter().sum::<f64>().abs() < 1e-12);

    let dir = tempfile::tempdir().unwrap();
    let star = dir.path().join("star.json");
    let out = rs_lab(&["star", "--harmonic", "2", "--s", "0.01", "--out", p(&star)]);
    assert!(out.status.success());
    let res = dir.path().join("residuals.csv");
    let out = rs_lab(&["balance", "--star", p(&star), "--report", p(&res)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["converged"], Value::Bool(true));
    assert!(fs::read_to_string(&res).unwrap().starts_with("iteration,residual,step\n"));

    let wrong = rs_lab(&["star", "--harmonic", "2", "--s", "0.01", "--coeffs", "1,2,3"]);
    assert_eq!(wrong.status.code(), Some(2));
}

#[test]
fn spectral_table() {
    let out = rs_lab(&["spectral", "--r", "1,1,1", "--d", "2", "--nmax", "20"]);
    assert!(out.status.success());
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.starts_with("n,lambda1,lambda2,lambda3,A_n,Lambda_n\n"));
    assert_eq!(csv.lines().count(), 22);
    // Equal unit radii: A_4 = 1/8.
    let a4: f64 = csv.lines().nth(5).unwrap().split(',').nth(4).unwrap().parse().unwrap();
    assert!((a4 - 0.125).abs() < 1e-9);
    assert_eq!(rs_lab(&["spectral", "--r", "1,1"]).status.code(), Some(2));
}

#[test]
fn run_exit_status_tracks_assertions() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.json");
    fs::write(&empty, r#"{"experiments": []}"#).unwrap();
    let out_dir = dir.path().join("a");
    let out = rs_lab(&["run", "--config", p(&empty), "--out", p(&out_dir)]);
    assert_eq!(out.status.code(), Some(0));
    let m: Value = serde_json::from_slice(&fs::read(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m, serde_json::json!({"passed": true, "experiments": []}));

    let failing = dir.path().join("fail.json");
    fs::write(&failing, r#"{"suite": "exponent", "family": "shifted", "expect_c": 3.0}"#).unwrap();
    let out = rs_lab(&["run", "--config", p(&failing), "--out", p(&dir.path().join("b"))]);
    assert_eq!(out.status.code(), Some(1));

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"suite": "nope"}"#).unwrap();
    let out = rs_lab(&["run", "--config", p(&bad), "--out", p(&dir.path().join("c"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/suite"));
}

#[test]
fn shipped_quick_config_passes() {
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/quick.json");
    let dir = tempfile::tempdir().unwrap();
    let out = rs_lab(&["run", "--config", p(&cfg), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}
