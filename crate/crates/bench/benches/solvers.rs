use std::hint::black_box;
use std::path::Path;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, Criterion};

use xva_bve::bve;
use xva_bve::engine::{price_mc_on, price_pde, simulate};
use xva_bve::{BveParams, DriftKind, RunConfig};

fn config(name: &str) -> RunConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../../configs/{name}.cfg"));
    RunConfig::load(&path).expect("shipped config loads")
}

fn sampler(c: &mut Criterion) {
    let params = BveParams::standard(1.0).unwrap();
    c.bench_function("bve sample 1e5", |b| b.iter(|| bve::sample(&params, black_box(7), 100_000)));
}

fn monte_carlo(c: &mut Criterion) {
    let mut cfg = config("benchmark");
    cfg.mc.n = 20_000;
    let bundle = simulate(&cfg, cfg.mc.n, cfg.mc.seed).unwrap();
    let mut g = c.benchmark_group("mc 2e4 paths");
    g.sample_size(10).measurement_time(Duration::from_secs(20));
    g.bench_function("simulate", |b| b.iter(|| simulate(&cfg, cfg.mc.n, black_box(cfg.mc.seed)).unwrap()));
    for kind in [DriftKind::NewBve, DriftKind::BfpBaseline] {
        g.bench_function(kind.label(), |b| b.iter(|| price_mc_on(&cfg, &bundle, kind).unwrap().v0));
    }
    g.finish();
}

fn finite_difference(c: &mut Criterion) {
    let mut cfg = config("benchmark");
    cfg.pde.n_x = 100;
    cfg.pde.n_t = 100;
    cfg.pde.n_i = 10;
    let mut g = c.benchmark_group("pde 100x100x10");
    g.sample_size(10).measurement_time(Duration::from_secs(20));
    for kind in [DriftKind::NewBve, DriftKind::BfpBaseline] {
        g.bench_function(kind.label(), |b| b.iter(|| price_pde(&cfg, kind).unwrap().v0));
    }
    g.finish();
}

criterion_group!(benches, sampler, monte_carlo, finite_difference);
criterion_main!(benches);
