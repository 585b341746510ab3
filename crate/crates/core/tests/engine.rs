use std::path::{Path, PathBuf};

use xva_bve::engine::compare::{alpha_sweep, compare_drifts, decompose, Solvers};
use xva_bve::engine::diagnostics::{Diagnostic, DiagnosticSizes};
use xva_bve::engine::run::{run_scenario, RunOptions};
use xva_bve::engine::validate::{lipschitz, validate_assumptions};
use xva_bve::{Error, RunConfig};

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../../configs/{name}.cfg"))
}

fn source(name: &str) -> String {
    std::fs::read_to_string(config_path(name)).unwrap()
}

fn issue_keys(text: &str) -> Vec<String> {
    match RunConfig::parse(text) {
        Err(Error::Config(issues)) => issues.into_iter().map(|i| i.key).collect(),
        Err(e) => panic!("expected a configuration error, got {e}"),
        Ok(_) => panic!("configuration accepted"),
    }
}

/// Small sizes so a full pipeline runs in seconds.
fn small(name: &str) -> RunConfig {
    let mut cfg = RunConfig::load(&config_path(name)).unwrap();
    cfg.mc.n = 4000;
    cfg.mc.steps = 20;
    cfg.pde.n_x = 80;
    cfg.pde.n_t = 40;
    cfg.pde.n_i = 8;
    cfg
}

#[test]
fn shipped_configs_load_and_pass_probes() {
    for name in ["benchmark", "degenerate", "single_name"] {
        let cfg = RunConfig::load(&config_path(name)).unwrap();
        let report = validate_assumptions(&cfg);
        let failing: Vec<_> = report.checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
        assert!(report.all_pass, "{name}: {failing:?}");
        assert_eq!(cfg.hash.len(), 64);
    }
}

#[test]
fn collateral_fraction_out_of_range_names_key() {
    let text = source("benchmark").replace("alpha_coll = \"constant(0.3)\"", "alpha_coll = \"constant(1.5)\"");
    assert!(issue_keys(&text).contains(&"contract.alpha_coll".to_string()));
}

#[test]
fn vanishing_volatility_rejected() {
    let text = source("benchmark").replace("sigma = \"geometric(0.2)\"", "sigma = \"geometric(0)\"");
    match RunConfig::parse(&text) {
        Err(Error::Config(issues)) => {
            let i = issues.iter().find(|i| i.key == "market.sigma").unwrap();
            assert!(i.message.contains("non-vanishing"), "{}", i.message);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn unknown_and_missing_keys_rejected() {
    let text = source("benchmark").replace("[market]\n", "[market]\nrate = 0.02\n");
    assert!(issue_keys(&text).contains(&"market.rate".to_string()));
    let text = source("benchmark").replace("r = \"constant(0.02)\"\n", "");
    assert!(issue_keys(&text).contains(&"market.r".to_string()));
}

#[test]
fn config_errors_exit_with_two() {
    let text = source("benchmark").replace("T = 1.0", "T = -1.0");
    assert_eq!(RunConfig::parse(&text).unwrap_err().exit_code(), 2);
}

#[test]
fn geometric_volatility_slope() {
    let k = lipschitz(|x| 0.2 * x, 50.0, 200.0);
    assert!((k - 0.2).abs() < 1e-12);
    let mut cfg = RunConfig::load(&config_path("benchmark")).unwrap();
    cfg.pde.x_min = 50.0;
    cfg.pde.x_max = 200.0;
    let c = validate_assumptions(&cfg).check("sigma_lipschitz").unwrap().clone();
    assert!((c.narrow - 0.2).abs() < 1e-9 && c.pass);
}

#[test]
fn logistic_intensity_bounded() {
    let text = source("benchmark").replace("lambda1 = \"constant(0.02)\"", "lambda1 = \"logistic(0.05, 1, 0)\"");
    let cfg = RunConfig::parse(&text).unwrap();
    let report = validate_assumptions(&cfg);
    let c = report.check("lambda1_bounded").unwrap();
    assert!(c.pass && c.narrow <= 0.05 && c.wide <= 0.05);
    assert!(report.check("lambda1_lipschitz").unwrap().pass);
}

#[test]
fn quadratic_hedge_fails_lipschitz_in_v() {
    let text = source("benchmark").replace("hedge = \"zero\"", "hedge = \"quadratic_v(1)\"");
    let report = validate_assumptions(&RunConfig::parse(&text).unwrap());
    assert!(!report.check("hedge_lipschitz_v").unwrap().pass);
    assert!(!report.all_pass);
}

#[test]
fn degenerate_comparison_has_no_difference() {
    let report = compare_drifts(&small("degenerate"), Solvers::BOTH).unwrap();
    assert!(report.failures.is_empty());
    for d in &report.deltas {
        assert!(d.value.abs() < 1e-10, "{} {}", d.solver, d.value);
    }
    for row in &report.decomposition {
        assert!(row.difference.abs() < 1e-12);
    }
}

#[test]
fn decomposition_terms_sum_to_difference() {
    let cfg = RunConfig::load(&config_path("benchmark")).unwrap();
    for (t, x, v, i, m) in [(0.0, 100.0, 9.0, 0.0, 0.0), (0.5, 80.0, -3.0, 1.2, -0.4), (0.9, 150.0, 40.0, -2.0, 0.7)] {
        let row = decompose(&cfg, t, x, v, 0.5, i, m).unwrap();
        assert!((row.difference - (row.drift_new - row.drift_bfp)).abs() < 1e-15);
        let sum = row.g_term + row.k_i + row.k_m;
        assert!((row.difference - sum).abs() <= 1e-12 * (1.0 + row.difference.abs()));
        assert!(row.residual.abs() <= 1e-12);
    }
}

#[test]
fn alpha_sweep_rows_and_monotone_atom() {
    let cfg = small("benchmark");
    let alphas = [0.0, 0.5, 1.0, 2.0];
    let rows = alpha_sweep(&cfg, &alphas, false).unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0].atom_probability, 0.0);
    assert!(rows.windows(2).all(|w| w[1].atom_probability > w[0].atom_probability));
    let par = alpha_sweep(&cfg, &alphas, true).unwrap();
    assert_eq!(rows, par);
}

#[test]
fn run_creates_directory_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small("benchmark");
    let options = RunOptions {
        sizes: Some(DiagnosticSizes {
            scenarios: 20_000,
            paths: 4000,
        }),
        ..RunOptions::all()
    };
    let a = tmp.path().join("nested/a");
    let b = tmp.path().join("b");
    let summary = run_scenario(&cfg, &options, &a).unwrap();
    run_scenario(&cfg, &options, &b).unwrap();
    assert_eq!(
        std::fs::read(a.join("summary.json")).unwrap(),
        std::fs::read(b.join("summary.json")).unwrap()
    );
    let d = &summary.diagnostics;
    assert!(d.compensator.is_some() && d.lando.is_some() && d.payout.is_some() && d.orthogonality.is_some());
    for f in &summary.files {
        assert!(a.join(f).exists(), "{f}");
    }
    assert!(a.join("compensator_reference.csv").exists());
    assert_eq!(summary.seed, cfg.mc.seed);
}

#[test]
fn diagnostic_selection_parses() {
    assert_eq!(Diagnostic::parse_list("all").unwrap(), Diagnostic::ALL.to_vec());
    assert_eq!(
        Diagnostic::parse_list("payout,lando").unwrap(),
        vec![Diagnostic::Lando, Diagnostic::Payout]
    );
    assert!(Diagnostic::parse_list("everything").is_err());
}

#[test]
fn unwritable_output_is_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let mut options = RunOptions::all();
    options.solvers = Solvers::MC;
    options.compare = false;
    options.diagnostics.clear();
    let err = run_scenario(&small("degenerate"), &options, &blocker.join("out")).unwrap_err();
    assert_eq!(err.exit_code(), 4);
    assert!(err.to_string().contains("file"));
}
