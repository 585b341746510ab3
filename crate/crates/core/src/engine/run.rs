//! Full scenario run: pricing, comparison, assumption probes and
//! diagnostics, written as a JSON summary plus CSV tables.
//!
//! The summary holds no timestamps or timings, so reruns with the same
//! configuration are byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::bsde::{BackwardSolution, DriftKind};
use crate::cox::{Candidate, CompensatorReport};
use crate::error::{Error, Result};
use crate::paths::PathBundle;
use crate::pde::PdeSolution;

use super::compare::{assemble, run_solvers, ComparisonReport, Solvers, KINDS};
use super::config::RunConfig;
use super::diagnostics::{run_diagnostics, Diagnostic, DiagnosticSizes, DiagnosticsReport};
use super::validate::{validate_assumptions, AssumptionReport};
use super::{price_mc_on, price_pde, simulate, McSummary, PdeSummary};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub solvers: Solvers,
    pub drifts: Vec<DriftKind>,
    /// Also produce the side-by-side drift comparison.
    pub compare: bool,
    pub diagnostics: Vec<Diagnostic>,
    pub sizes: Option<DiagnosticSizes>,
}

impl RunOptions {
    pub fn all() -> Self {
        RunOptions {
            solvers: Solvers::BOTH,
            drifts: vec![DriftKind::NewBve, DriftKind::BfpBaseline],
            compare: true,
            diagnostics: Diagnostic::ALL.to_vec(),
            sizes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub version: &'static str,
    pub schema_version: i64,
    pub config_hash: String,
    pub seed: u64,
    pub mc: Vec<McSummary>,
    pub pde: Vec<PdeSummary>,
    pub comparison: Option<ComparisonReport>,
    pub assumptions: AssumptionReport,
    pub diagnostics: DiagnosticsReport,
    /// Files written next to the summary.
    pub files: Vec<String>,
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes `value` as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Numeric(format!("cannot serialise report: {e}")))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes a CSV table from a header and rows of already formatted cells.
pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let io = |e: csv::Error| Error::io(path, e.into());
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `t,mean_v,mean_z` along the Monte-Carlo grid.
pub fn write_profile(path: &Path, profile: &[(f64, f64, f64)]) -> Result<()> {
    write_csv(
        path,
        &["t", "mean_v", "mean_z"],
        profile.iter().map(|(t, v, z)| vec![t.to_string(), v.to_string(), z.to_string()]),
    )
}

/// One table per candidate intensity, `compensator_<candidate>.csv` with
/// columns `t,emp_jump,emp_integral,drift,stderr`.
pub fn write_compensator(dir: &Path, report: &CompensatorReport) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for (c, label) in [(Candidate::Compensator, "compensator"), (Candidate::Reference, "reference")] {
        let path = dir.join(format!("compensator_{label}.csv"));
        write_csv(
            &path,
            &["t", "emp_jump", "emp_integral", "drift", "stderr"],
            report.rows_for(c).map(|r| {
                [r.t, r.emp_jump, r.emp_integral, r.drift, r.stderr]
                    .iter()
                    .map(f64::to_string)
                    .collect()
            }),
        )?;
        out.push(path);
    }
    Ok(out)
}

pub fn write_comparison(dir: &Path, report: &ComparisonReport) -> Result<Vec<PathBuf>> {
    let table = dir.join("comparison.csv");
    write_csv(
        &table,
        &["solver", "drift", "v0", "stderr", "picard_iters"],
        report.rows.iter().map(|r| {
            vec![
                r.solver.to_string(),
                r.drift.label().to_string(),
                r.v0.to_string(),
                r.stderr.map_or(String::new(), |s| s.to_string()),
                r.picard_iters.to_string(),
            ]
        }),
    )?;
    let decomposition = dir.join("decomposition.csv");
    write_csv(
        &decomposition,
        &[
            "t", "x", "v", "z", "accumulator", "m_sum", "drift_new", "drift_bfp", "difference", "g_term", "k_i",
            "k_m", "residual",
        ],
        report.decomposition.iter().map(|d| {
            [
                d.t,
                d.x,
                d.v,
                d.z,
                d.accumulator,
                d.m_sum,
                d.drift_new,
                d.drift_bfp,
                d.difference,
                d.g_term,
                d.k_i,
                d.k_m,
                d.residual,
            ]
            .iter()
            .map(f64::to_string)
            .collect()
        }),
    )?;
    Ok(vec![table, decomposition])
}

/// Errors are not `Clone`; a solver failure stored in a run is re-raised
/// with the same variant and message.
fn clone_err(e: &Error) -> Error {
    match e {
        Error::Domain(m) => Error::Domain(m.clone()),
        Error::Model(m) => Error::Model(m.clone()),
        Error::Usage(m) => Error::Usage(m.clone()),
        Error::Numeric(m) => Error::Numeric(m.clone()),
        Error::Config(v) => Error::Config(v.clone()),
        Error::NonConvergence {
            solver,
            iterations,
            trace,
        } => Error::NonConvergence {
            solver,
            iterations: *iterations,
            trace: trace.clone(),
        },
        Error::Io { path, source } => Error::io(path.clone(), std::io::Error::new(source.kind(), source.to_string())),
    }
}

fn dump_paths(config: &RunConfig, dir: &Path, bundle: &PathBundle, files: &mut Vec<String>) -> Result<()> {
    if config.output.dump_paths {
        let p = dir.join("paths.csv");
        bundle.dump_csv(&p)?;
        files.push(name(dir, &p));
    }
    Ok(())
}

fn write_mc(
    config: &RunConfig,
    dir: &Path,
    bundle: &PathBundle,
    drift: DriftKind,
    s: &BackwardSolution,
    files: &mut Vec<String>,
) -> Result<()> {
    if config.output.csv {
        let p = dir.join(format!("mc_profile_{}.csv", drift.label()));
        write_profile(&p, &s.profile(bundle.grid.times()))?;
        files.push(name(dir, &p));
    }
    Ok(())
}

fn write_pde(config: &RunConfig, dir: &Path, drift: DriftKind, s: &PdeSolution, files: &mut Vec<String>) -> Result<()> {
    if config.output.csv {
        let p = dir.join(format!("pde_surface_{}.csv", drift.label()));
        s.surface.write_csv(&p, config.output.surface_stride)?;
        files.push(name(dir, &p));
    }
    Ok(())
}

fn name(dir: &Path, p: &Path) -> String {
    p.strip_prefix(dir).unwrap_or(p).display().to_string()
}

/// Runs everything requested and writes the artifacts into `dir`, which is
/// created when missing. Returns the summary that was written.
pub fn run_scenario(config: &RunConfig, options: &RunOptions, dir: &Path) -> Result<RunSummary> {
    create_dir(dir)?;
    let mut files = Vec::new();
    let mut mc = Vec::new();
    let mut pde = Vec::new();

    let comparison = if options.compare {
        let runs = run_solvers(config, options.solvers)?;
        let report = assemble(config, &runs)?;
        if let Some(bundle) = &runs.bundle {
            dump_paths(config, dir, bundle, &mut files)?;
        }
        for (k, &drift) in KINDS.iter().enumerate() {
            if !options.drifts.contains(&drift) {
                continue;
            }
            if let (Some(mc_runs), Some(bundle)) = (&runs.mc, &runs.bundle) {
                let s = mc_runs[k].as_ref().map_err(clone_err)?;
                write_mc(config, dir, bundle, drift, s, &mut files)?;
                mc.push(McSummary::of(drift, s));
            }
            if let Some(pde_runs) = &runs.pde {
                let s = pde_runs[k].as_ref().map_err(clone_err)?;
                write_pde(config, dir, drift, s, &mut files)?;
                pde.push(PdeSummary::of(drift, s));
            }
        }
        if config.output.csv {
            for p in write_comparison(dir, &report)? {
                files.push(name(dir, &p));
            }
        }
        Some(report)
    } else {
        if options.solvers.mc && !options.drifts.is_empty() {
            let bundle = simulate(config, config.mc.n, config.mc.seed)?;
            dump_paths(config, dir, &bundle, &mut files)?;
            for &drift in &options.drifts {
                let s = price_mc_on(config, &bundle, drift)?;
                write_mc(config, dir, &bundle, drift, &s, &mut files)?;
                mc.push(McSummary::of(drift, &s));
            }
        }
        if options.solvers.pde {
            for &drift in &options.drifts {
                let s = price_pde(config, drift)?;
                write_pde(config, dir, drift, &s, &mut files)?;
                pde.push(PdeSummary::of(drift, &s));
            }
        }
        None
    };

    let sizes = options.sizes.unwrap_or_else(|| DiagnosticSizes::for_config(config));
    let diagnostics = run_diagnostics(config, &options.diagnostics, sizes)?;
    if let (Some(c), true) = (&diagnostics.compensator, config.output.csv) {
        for p in write_compensator(dir, c)? {
            files.push(name(dir, &p));
        }
    }

    let summary = RunSummary {
        version: VERSION,
        schema_version: config.schema_version,
        config_hash: config.hash.clone(),
        seed: config.mc.seed,
        mc,
        pde,
        comparison,
        assumptions: validate_assumptions(config),
        diagnostics,
        files,
    };
    if config.output.json {
        write_json(&dir.join("summary.json"), &summary)?;
    }
    Ok(summary)
}
