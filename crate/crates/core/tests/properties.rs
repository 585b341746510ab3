//! Statistical and structural properties checked at integration scale.

use std::path::Path;

use ndarray::{Array2, Axis};
use xva_bve::bve::{self, atom_probability, survival};
use xva_bve::cox::{survival_g, HazardPaths};
use xva_bve::engine::compare::{compare_drifts, Solvers};
use xva_bve::engine::diagnostics::{lando, payout};
use xva_bve::engine::{price_mc_on, price_pde, scenarios, simulate};
use xva_bve::pde::z_from_surface;
use xva_bve::rng::{substream, STREAM_BVE};
use xva_bve::{BveParams, DriftKind, IntensityModel, Payoff, RunConfig};

const SEED: u64 = 7;

fn load(name: &str) -> RunConfig {
    RunConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../../configs/{name}.cfg"))).unwrap()
}

fn binomial_z(hits: usize, n: usize, p: f64) -> f64 {
    let d = hits as f64 / n as f64 - p;
    if d == 0.0 {
        0.0
    } else {
        d.abs() / (p * (1.0 - p) / n as f64).sqrt()
    }
}

fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

#[test]
fn bve_joint_survival_on_grid() {
    let params = BveParams::new(1.0, 0.5, 0.7).unwrap();
    let n = 1_000_000;
    let draws = bve::sample(&params, substream(SEED, STREAM_BVE), n);
    let levels = [0.1, 0.3, 0.6, 1.0, 1.5];
    for &s in &levels {
        for &t in &levels {
            let hits = draws.iter().filter(|d| d.z1 > s && d.z2 > t).count();
            let p = survival(&params, s, t).unwrap();
            let z = binomial_z(hits, n, p);
            assert!(z < 3.0, "({s}, {t}): z {z}");
        }
    }
    let tied = draws.iter().filter(|d| d.z1 == d.z2).count();
    assert!(binomial_z(tied, n, atom_probability(&params)) < 3.0);
}

#[test]
fn bve_independent_without_common_shock() {
    let n = 1_000_000;
    let draws = bve::sample(&BveParams::new(1.0, 2.0, 0.0).unwrap(), substream(SEED, STREAM_BVE), n);
    let a: Vec<f64> = draws.iter().map(|d| f64::from(u8::from(d.z1 > 0.7))).collect();
    let b: Vec<f64> = draws.iter().map(|d| f64::from(u8::from(d.z2 > 0.3))).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n as f64;
    let (ma, mb) = (mean(&a), mean(&b));
    let cov = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n as f64;
    let rho = cov / (ma * (1.0 - ma) * mb * (1.0 - mb)).sqrt();
    assert!(rho.abs() < 3.0 / (n as f64).sqrt(), "rho {rho}");
}

#[test]
fn first_default_survival_on_grid() {
    let cfg = load("benchmark");
    let n = 200_000;
    let horizon = 20.0;
    let set = scenarios(&cfg, n, SEED, horizon).unwrap();
    let grid: Vec<f64> = (1..=10).map(|k| 2.0 * k as f64).collect();
    let hazards = HazardPaths::deterministic(&cfg.intensity, &[0.0, horizon], cfg.market.s0);
    let view = hazards.view().unwrap();
    for &t in &grid {
        let alive = set.scenarios.iter().filter(|s| !s.tau.occurred_by(t)).count();
        let g = survival_g(&cfg.intensity, &view, t).unwrap();
        assert!(binomial_z(alive, n, g) < 3.0, "t {t}");
    }
}

#[test]
fn simultaneous_defaults_occur_with_equal_intensities() {
    let mut cfg = load("benchmark");
    cfg.intensity = IntensityModel::constant(0.05, 0.05, 1.0).unwrap();
    let set = scenarios(&cfg, 1_000_000, SEED, 1.0).unwrap();
    let both = set
        .scenarios
        .iter()
        .filter(|s| s.tau1.occurred_by(1.0) && s.tau1 == s.tau2)
        .count();
    assert!(both > 0);
    assert!(set.scenarios.iter().filter(|s| s.tau1 == s.tau2 && s.tau1.occurred_by(1.0)).all(|s| s.simultaneous));
}

#[test]
fn forward_mean_is_compounded_spot() {
    let cfg = load("degenerate");
    let bundle = simulate(&cfg, 100_000, SEED).unwrap();
    let last = bundle.s.column(bundle.s.ncols() - 1).to_vec();
    let e = xva_bve::Estimate::from_samples(&last);
    assert!(e.z_score(100.0 * 0.02f64.exp()) < 3.0);
}

#[test]
fn terminal_column_is_payoff_and_block_order_irrelevant() {
    let mut cfg = load("benchmark");
    cfg.mc.n = 8192;
    cfg.mc.steps = 20;
    let bundle = simulate(&cfg, cfg.mc.n, cfg.mc.seed).unwrap();
    let a = price_mc_on(&cfg, &bundle, DriftKind::NewBve).unwrap();
    let m = bundle.s.ncols() - 1;
    for p in 0..bundle.n_paths() {
        assert_eq!(a.v[[p, m]], cfg.market.phi.eval(bundle.s[[p, m]]));
    }
    // Swap the two 4096-path blocks.
    let half = bundle.n_paths() / 2;
    let order: Vec<usize> = (half..bundle.n_paths()).chain(0..half).collect();
    let swap = |x: &Array2<f64>| x.select(Axis(0), &order);
    let mut swapped = bundle.clone();
    swapped.s = swap(&bundle.s);
    swapped.dw = swap(&bundle.dw);
    swapped.big_lambda1 = swap(&bundle.big_lambda1);
    swapped.big_lambda2 = swap(&bundle.big_lambda2);
    let b = price_mc_on(&cfg, &swapped, DriftKind::NewBve).unwrap();
    assert!((a.v0 - b.v0).abs() < 1e-9 * a.v0.abs(), "{} vs {}", a.v0, b.v0);
}

#[test]
fn standard_error_scales_with_root_n() {
    let cfg = load("degenerate");
    let se = |n| {
        let bundle = simulate(&cfg, n, cfg.mc.seed).unwrap();
        price_mc_on(&cfg, &bundle, DriftKind::BfpBaseline).unwrap().stderr
    };
    let ratio = se(40_000) / se(20_000);
    let expected = std::f64::consts::FRAC_1_SQRT_2;
    assert!((ratio / expected - 1.0).abs() < 0.25, "ratio {ratio}");
}

#[test]
fn picard_steps_shrink_on_benchmark() {
    let mut cfg = load("benchmark");
    cfg.mc.n = 50_000;
    let bundle = simulate(&cfg, cfg.mc.n, cfg.mc.seed).unwrap();
    let s = price_mc_on(&cfg, &bundle, DriftKind::NewBve).unwrap();
    let trace = &s.diagnostics.picard_trace;
    let steps: Vec<f64> = trace.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    assert!(steps.len() >= 1, "{trace:?}");
    assert!(steps.windows(2).skip(1).all(|w| w[1] <= w[0]), "{trace:?}");
}

#[test]
fn identities_hold_on_shipped_configs() {
    for name in ["benchmark", "degenerate", "single_name"] {
        let cfg = load(name);
        let mut reports = lando(&cfg, 50_000).unwrap();
        reports.push(payout(&cfg, 50_000).unwrap());
        for r in reports {
            assert!(r.passes(), "{name} {}: z {}", r.name, r.z_reference);
        }
    }
}

#[test]
fn pde_comparison_principle() {
    let mut cfg = load("benchmark");
    cfg.pde.n_x = 120;
    cfg.pde.n_t = 60;
    cfg.pde.theta = 1.0;
    let low = price_pde(&cfg, DriftKind::BfpBaseline).unwrap();
    cfg.market.phi = Payoff::Call(90.0);
    let high = price_pde(&cfg, DriftKind::BfpBaseline).unwrap();
    let worst = (&low.surface.u - &high.surface.u).fold(f64::NEG_INFINITY, |a, &d| a.max(d));
    assert!(worst <= 1e-10, "{worst}");
}

#[test]
fn baseline_on_accumulator_axis_matches_one_d() {
    let mut cfg = load("benchmark");
    cfg.pde.n_x = 120;
    cfg.pde.n_t = 60;
    cfg.pde.n_i = 6;
    let one = price_pde(&cfg, DriftKind::BfpBaseline).unwrap();
    cfg.pde.baseline_on_i_axis = true;
    let two = price_pde(&cfg, DriftKind::BfpBaseline).unwrap();
    assert!(two.surface.i_axis.len() > 1);
    let base = one.surface.u.index_axis(Axis(1), 0);
    for slice in two.surface.u.axis_iter(Axis(1)) {
        let diff = (&slice - &base).fold(0.0f64, |a, d| a.max(d.abs()));
        assert!(diff < 1e-8, "{diff}");
    }
}

#[test]
fn pde_delta_matches_closed_form() {
    let cfg = load("degenerate");
    let s = price_pde(&cfg, DriftKind::BfpBaseline).unwrap();
    let d1 = (0.02 + 0.5 * 0.04) / 0.2;
    let oracle = 0.2 * 100.0 * norm_cdf(d1);
    let z = z_from_surface(&s.surface, &cfg.market, 0.0, 100.0).unwrap();
    assert!((z / oracle - 1.0).abs() < 0.01, "{z} vs {oracle}");
}

#[test]
fn single_name_solvers_agree() {
    let report = compare_drifts(&load("single_name"), Solvers::BOTH).unwrap();
    let cc = report.cross_check.unwrap();
    assert!(cc.z_new < 3.0 && cc.z_bfp < 3.0, "{cc:?}");
}
