//! Side-by-side pricing with the new and the baseline driver.
//!
//! Both drivers are run on the same Monte-Carlo paths so that the price
//! difference has a paired standard error. The pointwise drift difference
//! is split into the part due to dividing by the survival process and the
//! two `K` terms.

use rayon::prelude::*;
use serde::Serialize;

use crate::bsde::{credit_snapshot, drift_bfp, drift_new_terms, BackwardSolution, DriftKind};
use crate::bve::atom_probability;
use crate::cox::HazardPaths;
use crate::error::{Error, Result};
use crate::paths::{PathBundle, TimeGrid};
use crate::pde::{z_from_surface, PdeSolution};
use crate::stats::Estimate;

use super::config::RunConfig;
use super::{price_mc_on, price_pde, simulate};

/// Which solvers a comparison runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Solvers {
    pub mc: bool,
    pub pde: bool,
}

impl Solvers {
    pub const BOTH: Solvers = Solvers { mc: true, pde: true };
    pub const MC: Solvers = Solvers { mc: true, pde: false };
}

impl std::str::FromStr for Solvers {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let mut out = Solvers { mc: false, pde: false };
        for part in s.split(',').map(str::trim) {
            match part {
                "mc" => out.mc = true,
                "pde" => out.pde = true,
                "both" => out = Solvers::BOTH,
                _ => return Err(format!("unknown solver `{part}` (mc, pde, both)")),
            }
        }
        if !(out.mc || out.pde) {
            return Err("no solver selected".into());
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverRow {
    pub solver: &'static str,
    pub drift: DriftKind,
    pub v0: f64,
    pub stderr: Option<f64>,
    pub picard_iters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Delta {
    pub solver: &'static str,
    pub value: f64,
    /// Paired standard error (Monte Carlo only).
    pub stderr: Option<f64>,
}

/// `|PDE - MC|` in Monte-Carlo standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossCheck {
    pub z_new: f64,
    pub z_bfp: f64,
    pub z_delta: f64,
}

impl CrossCheck {
    pub fn passes(&self) -> bool {
        self.z_new < 3.0 && self.z_bfp < 3.0 && self.z_delta < 3.0
    }
}

/// `|d| / se`, with an exact hit counting as 0 even when `se = 0`.
fn distance(d: f64, se: f64) -> f64 {
    if d == 0.0 {
        0.0
    } else {
        d.abs() / se
    }
}

/// Drift difference at one probe point, split into its sources.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecompositionRow {
    pub t: f64,
    pub x: f64,
    pub v: f64,
    pub z: f64,
    pub accumulator: f64,
    pub m_sum: f64,
    pub drift_new: f64,
    pub drift_bfp: f64,
    /// `drift_new - drift_bfp`
    pub difference: f64,
    /// Survival division and the change of intensity.
    pub g_term: f64,
    /// `K I` term.
    pub k_i: f64,
    /// `K (M¹ + M²)` term.
    pub k_m: f64,
    /// `difference - (g_term + k_i + k_m)`
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub solver: &'static str,
    pub drift: DriftKind,
    pub message: String,
    pub exit_code: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    /// Solver behind `v0_new` and `v0_bfp`: Monte Carlo when it ran.
    pub reference_solver: &'static str,
    pub v0_new: f64,
    pub v0_bfp: f64,
    pub delta: f64,
    pub rows: Vec<SolverRow>,
    pub deltas: Vec<Delta>,
    pub cross_check: Option<CrossCheck>,
    pub decomposition: Vec<DecompositionRow>,
    pub failures: Vec<Failure>,
}

impl ComparisonReport {
    pub fn row(&self, solver: &str, drift: DriftKind) -> Option<&SolverRow> {
        self.rows.iter().find(|r| r.solver == solver && r.drift == drift)
    }

    pub fn delta_for(&self, solver: &str) -> Option<&Delta> {
        self.deltas.iter().find(|d| d.solver == solver)
    }

    /// Exit code of the first solver failure, if any.
    pub fn exit_code(&self) -> i32 {
        self.failures.first().map_or(0, |f| f.exit_code)
    }
}

/// `(Λ¹, Λ², e^{∫(r+λ)})` at `t` with the state frozen at `x`.
fn credit_state(config: &RunConfig, t: f64, x: f64) -> Result<(f64, f64, f64)> {
    if t == 0.0 {
        return Ok((0.0, 0.0, 1.0));
    }
    let grid = TimeGrid::uniform(t, 1000)?;
    let hazards = HazardPaths::deterministic(&config.intensity, grid.times(), x);
    let view = hazards.view()?;
    let (b1, b2) = view.cumulative_at(t)?;
    let log_growth = config.market.r.integral(0.0, t) + view.compensator_integral(&config.intensity, t)?;
    Ok((b1, b2, log_growth.exp()))
}

/// Splits the drift difference at `(t, x)`, with the credit state taken
/// along the constant path at `x`.
#[allow(clippy::too_many_arguments)]
pub fn decompose(
    config: &RunConfig,
    t: f64,
    x: f64,
    v: f64,
    z: f64,
    accumulator: f64,
    m_sum: f64,
) -> Result<DecompositionRow> {
    let (big1, big2, growth) = credit_state(config, t, x)?;
    let snap = |kind| {
        let mut s = credit_snapshot(kind, &config.intensity, t, x, big1, big2, growth);
        s.v = v;
        s.z = z;
        s
    };
    let terms = drift_new_terms(&config.contract, &config.market, &snap(DriftKind::NewBve), accumulator, m_sum)?;
    let new = terms.total();
    let bfp = drift_bfp(&config.contract, &config.market, &snap(DriftKind::BfpBaseline));
    let g_term = terms.discounting + terms.running - bfp;
    let difference = new - bfp;
    Ok(DecompositionRow {
        t,
        x,
        v,
        z,
        accumulator,
        m_sum,
        drift_new: new,
        drift_bfp: bfp,
        difference,
        g_term,
        k_i: terms.k_i,
        k_m: terms.k_m,
        residual: difference - (g_term + terms.k_i + terms.k_m),
    })
}

/// Raw solver output shared by the comparison and the run artifacts.
pub struct SolverRuns {
    pub bundle: Option<PathBundle>,
    /// `[new, bfp]` on the same paths.
    pub mc: Option<[Result<BackwardSolution>; 2]>,
    /// `[new, bfp]`.
    pub pde: Option<[Result<PdeSolution>; 2]>,
}

pub const KINDS: [DriftKind; 2] = [DriftKind::NewBve, DriftKind::BfpBaseline];

/// Prices both drivers with the selected solvers, keeping failures.
pub fn run_solvers(config: &RunConfig, solvers: Solvers) -> Result<SolverRuns> {
    let (bundle, mc) = if solvers.mc {
        let bundle = simulate(config, config.mc.n, config.mc.seed)?;
        let mc = KINDS.map(|k| price_mc_on(config, &bundle, k));
        (Some(bundle), Some(mc))
    } else {
        (None, None)
    };
    let pde = solvers.pde.then(|| KINDS.map(|k| price_pde(config, k)));
    Ok(SolverRuns { bundle, mc, pde })
}

fn failure(solver: &'static str, drift: DriftKind, e: &Error) -> Failure {
    Failure {
        solver,
        drift,
        exit_code: e.exit_code(),
        message: e.to_string(),
    }
}

/// Runs both drivers through the selected solvers. Solver failures are
/// collected in the report rather than aborting it.
pub fn compare_drifts(config: &RunConfig, solvers: Solvers) -> Result<ComparisonReport> {
    assemble(config, &run_solvers(config, solvers)?)
}

/// Builds the comparison from finished solver runs.
pub fn assemble(config: &RunConfig, runs: &SolverRuns) -> Result<ComparisonReport> {
    let mut rows = Vec::new();
    let mut deltas = Vec::new();
    let mut failures = Vec::new();

    let mut mc_pair = None;
    if let Some(mc) = &runs.mc {
        for (res, &kind) in mc.iter().zip(&KINDS) {
            match res {
                Ok(s) => rows.push(SolverRow {
                    solver: "mc",
                    drift: kind,
                    v0: s.v0,
                    stderr: Some(s.stderr),
                    picard_iters: s.diagnostics.picard_iters,
                }),
                Err(e) => failures.push(failure("mc", kind, e)),
            }
        }
        if let [Ok(a), Ok(b)] = mc {
            let diff: Vec<f64> = a.pathwise.iter().zip(&b.pathwise).map(|(x, y)| x - y).collect();
            let paired = Estimate::from_samples(&diff);
            deltas.push(Delta {
                solver: "mc",
                value: a.v0 - b.v0,
                stderr: Some(paired.stderr),
            });
            mc_pair = Some((a, b, paired));
        }
    }

    let mut pde_pair = None;
    if let Some(pde) = &runs.pde {
        for (res, &kind) in pde.iter().zip(&KINDS) {
            match res {
                Ok(s) => rows.push(SolverRow {
                    solver: "pde",
                    drift: kind,
                    v0: s.v0,
                    stderr: None,
                    picard_iters: s.picard_iters,
                }),
                Err(e) => failures.push(failure("pde", kind, e)),
            }
        }
        if let [Ok(a), Ok(b)] = pde {
            deltas.push(Delta {
                solver: "pde",
                value: a.v0 - b.v0,
                stderr: None,
            });
            pde_pair = Some((a, b));
        }
    }

    let cross_check = match (&mc_pair, &pde_pair) {
        (Some((ma, mb, paired)), Some((pa, pb))) => Some(CrossCheck {
            z_new: distance(pa.v0 - ma.v0, ma.stderr),
            z_bfp: distance(pb.v0 - mb.v0, mb.stderr),
            z_delta: distance((pa.v0 - pb.v0) - (ma.v0 - mb.v0), paired.stderr),
        }),
        _ => None,
    };

    let s0 = config.market.s0;
    let (reference_solver, v0_new, v0_bfp, z0, m0) = match (&mc_pair, &pde_pair) {
        (Some((a, b, _)), _) => (
            "mc",
            a.v0,
            b.v0,
            a.z.column(0).mean().unwrap_or(0.0),
            a.m_sum.column(0).mean().unwrap_or(0.0),
        ),
        (None, Some((a, b))) => (
            "pde",
            a.v0,
            b.v0,
            z_from_surface(&a.surface, &config.market, 0.0, s0).unwrap_or(0.0),
            0.0,
        ),
        _ => ("none", f64::NAN, f64::NAN, 0.0, 0.0),
    };

    let mut decomposition = Vec::new();
    if v0_new.is_finite() {
        decomposition.push(decompose(config, 0.0, s0, v0_new, z0, 0.0, m0)?);
        let half = 0.5 * config.contract.maturity;
        for scale in [0.5, 1.0, 1.5] {
            let x = scale * s0;
            let v = config.market.phi.eval(x).max(1.0);
            let z = config.market.sigma.eval(x, half);
            decomposition.push(decompose(config, half, x, v, z, 0.1 * v, m0)?);
            decomposition.push(decompose(config, half, x, -v, z, -0.1 * v, m0)?);
        }
    }

    Ok(ComparisonReport {
        reference_solver,
        v0_new,
        v0_bfp,
        delta: v0_new - v0_bfp,
        rows,
        deltas,
        cross_check,
        decomposition,
        failures,
    })
}

/// One row of the common-shock sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub alpha_bar: f64,
    pub atom_probability: f64,
    pub v0_new: f64,
    pub v0_bfp: f64,
    pub delta: f64,
    pub delta_stderr: f64,
}

fn sweep_point(config: &RunConfig, alpha_bar: f64) -> Result<SweepRow> {
    let cfg = config.with_alpha_bar(alpha_bar)?;
    let bundle = simulate(&cfg, cfg.mc.n, cfg.mc.seed)?;
    let a = price_mc_on(&cfg, &bundle, DriftKind::NewBve)?;
    let b = price_mc_on(&cfg, &bundle, DriftKind::BfpBaseline)?;
    let diff: Vec<f64> = a.pathwise.iter().zip(&b.pathwise).map(|(x, y)| x - y).collect();
    Ok(SweepRow {
        alpha_bar,
        atom_probability: atom_probability(&cfg.intensity.bve_params()?),
        v0_new: a.v0,
        v0_bfp: b.v0,
        delta: a.v0 - b.v0,
        delta_stderr: Estimate::from_samples(&diff).stderr,
    })
}

/// Monte-Carlo comparison for each common-shock weight. With `parallel`
/// the points run concurrently; each point uses the same seed and its own
/// paths, so the rows do not depend on the schedule.
pub fn alpha_sweep(config: &RunConfig, alphas: &[f64], parallel: bool) -> Result<Vec<SweepRow>> {
    if parallel {
        alphas.par_iter().map(|&a| sweep_point(config, a)).collect()
    } else {
        alphas.iter().map(|&a| sweep_point(config, a)).collect()
    }
}
