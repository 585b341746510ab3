use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_xva-bve"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../../configs/{name}.cfg"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

/// A shipped config shrunk so the solvers finish quickly.
fn small_config(dir: &Path, name: &str) -> PathBuf {
    let text = std::fs::read_to_string(config(name))
        .unwrap()
        .replace("n = 200000", "n = 3000")
        .replace("steps = 50", "steps = 20")
        .replace("nx = 400", "nx = 60")
        .replace("nt = 400", "nt = 30")
        .replace("ni = 50", "ni = 6")
        .replace("ni = 10", "ni = 6");
    let p = dir.join(format!("{name}.cfg"));
    std::fs::write(&p, text).unwrap();
    p
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn sample_bve_writes_header_and_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("z.csv");
    let o = run(&["sample-bve", "--alpha-bar", "1", "--n", "100", "--seed", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("z1,z2,simultaneous"));
    assert_eq!(lines.count(), 100);
}

#[test]
fn sample_bve_rejects_negative_weight() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("z.csv");
    let o = run(&["sample-bve", "--alpha-bar", "-1", "--n", "10", "--out", out.to_str().unwrap()]);
    assert_ne!(code(&o), 0);
    assert!(!out.exists());
}

#[test]
fn simulate_defaults_with_horizon() {
    let tmp = tempfile::tempdir().unwrap();
    // Tied thresholds give a common default time only with equal intensities.
    let text = std::fs::read_to_string(config("benchmark"))
        .unwrap()
        .replace("lambda2 = \"constant(0.03)\"", "lambda2 = \"constant(0.02)\"");
    let cfg = tmp.path().join("equal.cfg");
    std::fs::write(&cfg, text).unwrap();
    let out = tmp.path().join("tau.csv");
    let o = run(&[
        "simulate-defaults",
        "--config",
        cfg.to_str().unwrap(),
        "--n",
        "2000",
        "--horizon",
        "50",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("tau1,tau2,tau,simultaneous\n"));
    let rows: Vec<_> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2000);
    assert!(rows.iter().any(|r| r.ends_with("true")));
}

#[test]
fn price_mc_json_and_profile() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "benchmark");
    let out = tmp.path().join("mc.json");
    let profile = tmp.path().join("profile.csv");
    let o = run(&[
        "price-mc",
        "--config",
        cfg.to_str().unwrap(),
        "--drift",
        "new",
        "--out",
        out.to_str().unwrap(),
        "--profile",
        profile.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&out);
    for key in ["v0", "stderr", "picard_iters", "diagnostics"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert!(std::fs::read_to_string(profile).unwrap().starts_with("t,mean_v,mean_z\n"));
}

#[test]
fn price_pde_surface() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "degenerate");
    let surface = tmp.path().join("surface.csv");
    let o = run(&[
        "price-pde",
        "--config",
        cfg.to_str().unwrap(),
        "--drift",
        "bfp",
        "--surface",
        surface.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let v0 = v["v0"].as_f64().unwrap();
    assert!((v0 - 8.916).abs() < 0.2, "{v0}");
    assert!(std::fs::read_to_string(surface).unwrap().starts_with("t,x,I,u\n"));
}

#[test]
fn compare_drifts_writes_tables_and_sweep() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "benchmark");
    let dir = tmp.path().join("cmp");
    let o = run(&[
        "compare-drifts",
        "--config",
        cfg.to_str().unwrap(),
        "--alpha-sweep",
        "0,0.5,1,2",
        "--parallel-scenarios",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&dir.join("comparison.json"));
    assert_eq!(v["alpha_sweep"].as_array().unwrap().len(), 4);
    assert_eq!(v["comparison"]["rows"].as_array().unwrap().len(), 4);
    for f in ["comparison.csv", "decomposition.csv", "alpha_sweep.csv"] {
        assert!(dir.join(f).exists(), "{f}");
    }
}

#[test]
fn diagnose_compensator_writes_both_candidates() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("diag");
    let o = run(&[
        "diagnose",
        "compensator",
        "--config",
        config("single_name").to_str().unwrap(),
        "--scenarios",
        "20000",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let header = "t,emp_jump,emp_integral,drift,stderr\n";
    for f in ["compensator_compensator.csv", "compensator_reference.csv"] {
        let text = std::fs::read_to_string(dir.join(f)).unwrap();
        assert!(text.starts_with(header));
        assert_eq!(text.lines().count(), 11);
    }
}

#[test]
fn validate_reports_without_failing() {
    let tmp = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config("benchmark"))
        .unwrap()
        .replace("hedge = \"zero\"", "hedge = \"quadratic_v(1)\"");
    let cfg = tmp.path().join("q.cfg");
    std::fs::write(&cfg, text).unwrap();
    let o = run(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["all_pass"], false);
}

#[test]
fn run_writes_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "degenerate");
    let dir = tmp.path().join("run");
    let o = run(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--diagnostics",
        "lando,orthogonality",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&dir.join("summary.json"));
    assert_eq!(v["seed"], 20240611);
    assert!(v["diagnostics"]["compensator"].is_null());
    assert!(!v["diagnostics"]["lando"].is_null());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.cfg");
    let text = std::fs::read_to_string(config("benchmark"))
        .unwrap()
        .replace("alpha_coll = \"constant(0.3)\"", "alpha_coll = \"constant(1.5)\"");
    std::fs::write(&bad, text).unwrap();
    let o = run(&["validate", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("contract.alpha_coll"));

    let o = run(&["validate", "--config", tmp.path().join("missing.cfg").to_str().unwrap()]);
    assert_eq!(code(&o), 4);

    assert_eq!(code(&run(&["price-mc", "--drift", "new"])), 2);
    assert_eq!(
        code(&run(&["diagnose", "bogus", "--config", config("benchmark").to_str().unwrap()])),
        2
    );
}
