//! Configuration, assumption probes, solver orchestration and reports.

pub mod compare;
pub mod config;
pub mod diagnostics;
pub mod run;
pub mod validate;

use serde::Serialize;

use crate::bsde::{solve_bsde_mc, BackwardSolution, DriftKind, McDiagnostics};
use crate::bve;
use crate::cox::{HazardPaths, ScenarioSet};
use crate::error::Result;
use crate::paths::{simulate_paths, PathBundle, TimeGrid};
use crate::pde::{solve_pde, GridReport, PdeSolution};
use crate::rng::{substream, STREAM_BVE};

use config::RunConfig;

/// Sub-steps per unit time for deterministic hazard curves.
const HAZARD_RESOLUTION: f64 = 1000.0;

/// Simulation grid of the Monte-Carlo solver.
pub fn mc_grid(config: &RunConfig) -> Result<TimeGrid> {
    TimeGrid::uniform(config.contract.maturity, config.mc.steps)
}

/// Asset and hazard paths for pricing, `n` paths from master seed `seed`.
pub fn simulate(config: &RunConfig, n: usize, seed: u64) -> Result<PathBundle> {
    simulate_paths(&config.market, &config.intensity, &mc_grid(config)?, n, seed)
}

/// `n` default scenarios over `[0, horizon]`. State-free intensities share
/// one finely tabulated hazard curve; otherwise each scenario rides its own
/// simulated path.
pub fn scenarios(config: &RunConfig, n: usize, seed: u64, horizon: f64) -> Result<ScenarioSet> {
    let intensity = &config.intensity;
    if intensity.is_state_free() {
        let steps = ((horizon * HAZARD_RESOLUTION).ceil() as usize).max(100);
        let grid = TimeGrid::uniform(horizon, steps)?;
        let hazards = HazardPaths::deterministic(intensity, grid.times(), config.market.s0);
        let samples = bve::sample(&intensity.bve_params()?, substream(seed, STREAM_BVE), n);
        return ScenarioSet::shared(hazards, &samples);
    }
    let steps = ((horizon / config.contract.maturity) * config.mc.steps as f64).ceil() as usize;
    let grid = TimeGrid::uniform(horizon, steps.max(1))?;
    let bundle = simulate_paths(&config.market, intensity, &grid, n, seed)?;
    let scenarios = bundle.default_scenarios(intensity)?;
    let hazards = (0..n)
        .map(|p| HazardPaths {
            grid: grid.times().to_vec(),
            big1: bundle.big_lambda1.row(p).to_vec(),
            big2: bundle.big_lambda2.row(p).to_vec(),
        })
        .collect();
    Ok(ScenarioSet { hazards, scenarios })
}

/// Monte-Carlo price on an existing bundle.
pub fn price_mc_on(config: &RunConfig, bundle: &PathBundle, drift: DriftKind) -> Result<BackwardSolution> {
    solve_bsde_mc(
        bundle,
        &config.contract,
        &config.intensity,
        &config.market,
        drift,
        &config.mc.basis,
        &config.mc.picard,
    )
}

pub fn price_pde(config: &RunConfig, drift: DriftKind) -> Result<PdeSolution> {
    solve_pde(&config.market, &config.contract, &config.intensity, drift, &config.pde)
}

/// JSON body of a Monte-Carlo pricing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McSummary {
    pub drift: DriftKind,
    pub n: usize,
    pub v0: f64,
    pub stderr: f64,
    pub picard_iters: usize,
    pub diagnostics: McDiagnostics,
}

impl McSummary {
    pub fn of(drift: DriftKind, s: &BackwardSolution) -> Self {
        McSummary {
            drift,
            n: s.pathwise.len(),
            v0: s.v0,
            stderr: s.stderr,
            picard_iters: s.diagnostics.picard_iters,
            diagnostics: s.diagnostics.clone(),
        }
    }
}

/// JSON body of a PDE pricing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PdeSummary {
    pub drift: DriftKind,
    pub v0: f64,
    pub picard_iters: usize,
    pub grid_report: GridReport,
}

impl PdeSummary {
    pub fn of(drift: DriftKind, s: &PdeSolution) -> Self {
        PdeSummary {
            drift,
            v0: s.v0,
            picard_iters: s.picard_iters,
            grid_report: s.grid_report.clone(),
        }
    }
}
