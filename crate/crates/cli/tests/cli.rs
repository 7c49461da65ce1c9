use std::path::Path;
use std::process::{Command, Output};

fn hatfem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hatfem"))
        .arg("--quiet")
        .args(args)
        .output()
        .expect("spawn hatfem")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn fem_spectrum_relu_slope_and_golden_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = hatfem(&["fem-spectrum", "--basis", "relu", "--sizes", "16,32,64,128,256", "--out", d.path().to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let s = json(&a.path().join("fem_summary.json"));
    let slope = s["slope"].as_f64().unwrap();
    assert!((3.7..=4.3).contains(&slope), "{slope}");
    for f in ["fem_summary.json", "spectrum_n64.csv", "spectrum.svg", "eigenfunctions.svg"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn hat_spectrum_is_well_conditioned() {
    let d = tempfile::tempdir().unwrap();
    let out = hatfem(&["fem-spectrum", "--basis", "hat", "--sizes", "8,16,32", "--out", d.path().to_str().unwrap()]);
    assert!(out.status.success());
    let s = json(&d.path().join("fem_summary.json"));
    for e in s["spectra"].as_array().unwrap() {
        assert!(e["condition"].as_f64().unwrap() <= 6.0);
    }
}

#[test]
fn gd_sim_writes_trace_per_size() {
    let d = tempfile::tempdir().unwrap();
    let out = hatfem(&["gd-sim", "--sizes", "16,64", "--steps", "20", "--out", d.path().to_str().unwrap()]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(d.path().join("n16/gd.csv")).unwrap();
    assert_eq!(csv.lines().count(), 22);
    let s = json(&d.path().join("gd_summary.json"));
    assert!(s[1]["max_decay_deviation"].as_f64().unwrap() < 1e-10);
}

#[test]
fn train_from_config_then_report() {
    let d = tempfile::tempdir().unwrap();
    let cfg_path = d.path().join("cfg.json");
    let printed = hatfem(&["train", "--experiment", "exp1-sum135", "--print-config"]);
    assert!(printed.status.success());
    let mut cfg: serde_json::Value = serde_json::from_slice(&printed.stdout).unwrap();
    cfg["epochs"] = 0.into();
    cfg["model"]["hidden"] = serde_json::json!([8]);
    std::fs::write(&cfg_path, cfg.to_string()).unwrap();
    let out_dir = d.path().join("runs");
    let out = hatfem(&["train", "--config", cfg_path.to_str().unwrap(), "--seed", "7", "--jobs", "2", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = json(&out_dir.join("exp1-sum135/summary.json"));
    assert_eq!(s["schema_version"], 1);
    assert_eq!(s["runs"][0]["seed"], 7);
    assert!(out_dir.join("exp1-sum135/seed-7/freq.csv").exists());
    let rep = hatfem(&["report", "--out", out_dir.to_str().unwrap()]);
    assert!(rep.status.success());
    assert!(String::from_utf8_lossy(&rep.stdout).contains("exp1-sum135"));
    assert!(out_dir.join("report.md").exists());
}

#[test]
fn config_errors_exit_2() {
    let d = tempfile::tempdir().unwrap();
    let bad = d.path().join("bad.json");
    std::fs::write(&bad, r#"{"id": "exp1-sum135", "seeds": []}"#).unwrap();
    assert_eq!(hatfem(&["train", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
    std::fs::write(&bad, "not json").unwrap();
    assert_eq!(hatfem(&["train", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(hatfem(&["train"]).status.code(), Some(2));
    assert_eq!(hatfem(&["train", "--experiment", "exp9"]).status.code(), Some(2));
    assert_eq!(hatfem(&["fem-spectrum", "--basis", "tanh"]).status.code(), Some(2));
    let out = hatfem(&["train", "--experiment", "exp1-sum135", "--seed", "1", "--print-config"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn divergence_exits_3() {
    let d = tempfile::tempdir().unwrap();
    let printed = hatfem(&["train", "--experiment", "sgd-variant", "--print-config"]);
    let mut cfg: serde_json::Value = serde_json::from_slice(&printed.stdout).unwrap();
    cfg["epochs"] = 50.into();
    cfg["model"]["hidden"] = serde_json::json!([16]);
    cfg["optimizer"]["optimizer"]["lr"] = 1e6.into();
    cfg["seeds"] = serde_json::json!([1]);
    cfg["out_dir"] = d.path().to_str().unwrap().into();
    let p = d.path().join("cfg.json");
    std::fs::write(&p, cfg.to_string()).unwrap();
    let out = hatfem(&["train", "--config", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let s = json(&d.path().join("sgd-variant/summary.json"));
    assert_eq!(s["runs"][0]["diverged"], true);
    assert_eq!(s["groups"][0]["diverged_seeds"], serde_json::json!([1]));
}
