use std::process::Command;

fn tfqkd() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tfqkd"))
}

fn tmp(name: &str) -> std::path::PathBuf {
    std::env::temp_dir().join(format!("tfqkd-cli-{}-{name}", std::process::id()))
}

#[test]
fn scan_csv_is_stable() {
    let run = || tfqkd().args(["scan", "--seed", "3"]).output().unwrap();
    let (a, b) = (run(), run());
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert_eq!(text.lines().next().unwrap(), "L_km,rate_total,rate_mu_t1,rate_mu_t2,plob,eZ,eY,delta_bias,flags");
    assert_eq!(text.lines().count(), 62);
}

#[test]
fn empty_grid_fails() {
    let cfg = tmp("empty.toml");
    std::fs::write(&cfg, "[scan]\nl_min = 300.0\nl_max = 100.0\n").unwrap();
    let out = tfqkd().args(["scan", "--config"]).arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty scan grid"));
}

#[test]
fn corrupted_counts_rejected() {
    let path = tmp("bad.json");
    std::fs::write(&path, "{\"schema\": \"tfqkd-counts/1\", \"n_rounds\": 3").unwrap();
    let out = tfqkd().args(["finite", "--counts"]).arg(&path).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("counts document"));
}

#[test]
fn simulate_then_finite() {
    let path = tmp("counts.json");
    let ok = tfqkd().args(["simulate", "--n-rounds", "200000", "--distance", "30", "--output"]).arg(&path).status().unwrap();
    assert!(ok.success());
    let out = tfqkd().args(["finite", "--format", "json", "--counts"]).arg(&path).output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["n_rounds"], 200000);
    assert_eq!(v["key_length"], 0.0);
    assert!(v["eps_s"].as_f64().unwrap() > 0.0);
}

#[test]
fn verify_flags_low_cutoff_without_failing() {
    let out = tfqkd().args(["verify", "--cutoff", "1"]).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("FLAGGED purification"));
    let strict = tfqkd().args(["verify", "--cutoff", "1", "--strict"]).status().unwrap();
    assert!(!strict.success());
}
