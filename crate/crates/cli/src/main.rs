//! Command-line front end of the pricing engine.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 solver failure
//! (including non-convergence), 4 I/O error.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use xva_bve::bve::{self, BveParams};
use xva_bve::engine::compare::{alpha_sweep, compare_drifts, Solvers};
use xva_bve::engine::diagnostics::{run_diagnostics, Diagnostic, DiagnosticSizes};
use xva_bve::engine::run::{run_scenario, write_compensator, write_comparison, write_csv, write_json, write_profile, RunOptions};
use xva_bve::engine::validate::validate_assumptions;
use xva_bve::engine::{price_mc_on, price_pde, scenarios, simulate, McSummary, PdeSummary};
use xva_bve::rng::{substream, STREAM_BVE};
use xva_bve::{DriftKind, Error, Result, RunConfig};

#[derive(Parser)]
#[command(name = "xva-bve", version, about = "Bilateral CVA pricing with simultaneous defaults")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Drift {
    New,
    Bfp,
}

impl From<Drift> for DriftKind {
    fn from(d: Drift) -> Self {
        match d {
            Drift::New => DriftKind::NewBve,
            Drift::Bfp => DriftKind::BfpBaseline,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Draw from the bivariate exponential law; CSV `z1,z2,simultaneous`.
    SampleBve {
        #[arg(long)]
        alpha_bar: f64,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate default times; CSV `tau1,tau2,tau,simultaneous`.
    SimulateDefaults {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Default times past the horizon are written as `inf`. Defaults to maturity.
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Regression Monte-Carlo price; JSON `{v0, stderr, picard_iters, diagnostics}`.
    PriceMc {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        drift: Drift,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// CSV `t,mean_v,mean_z`.
        #[arg(long)]
        profile: Option<PathBuf>,
        /// CSV `path_id,t,s,Lambda1,Lambda2`.
        #[arg(long)]
        dump_paths: Option<PathBuf>,
    },
    /// Finite-difference price; JSON `{v0, picard_iters, grid_report}`.
    PricePde {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        drift: Drift,
        #[arg(long)]
        nx: Option<usize>,
        #[arg(long)]
        nt: Option<usize>,
        #[arg(long)]
        ni: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// CSV `t,x,I,u`.
        #[arg(long)]
        surface: Option<PathBuf>,
    },
    /// Price with both drivers and report the difference.
    CompareDrifts {
        #[arg(long)]
        config: PathBuf,
        /// `mc`, `pde` or `mc,pde`.
        #[arg(long, default_value = "mc,pde")]
        solvers: String,
        /// Comma-separated common-shock weights for a Monte-Carlo sweep.
        #[arg(long, value_delimiter = ',')]
        alpha_sweep: Option<Vec<f64>>,
        #[arg(long)]
        parallel_scenarios: bool,
        /// Output directory; the report goes to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo diagnostics of the credit model.
    Diagnose {
        /// compensator, lando, payout, orthogonality or all
        which: String,
        #[arg(long)]
        config: PathBuf,
        /// Asset paths for the path-based checks.
        #[arg(long)]
        n: Option<usize>,
        /// Default scenarios for the compensator diagnostic.
        #[arg(long)]
        scenarios: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Probe the Lipschitz and growth hypotheses of the model.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Everything: both solvers, both drivers, comparison and diagnostics.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "all")]
        diagnostics: String,
        #[arg(long, default_value = "mc,pde")]
        solvers: String,
        /// Overrides `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn usage(e: String) -> Error {
    Error::Usage(e)
}

fn load(path: &Path) -> Result<RunConfig> {
    RunConfig::load(path)
}

fn emit(out: Option<&Path>, value: &serde_json::Value) -> Result<()> {
    match out {
        Some(p) => write_json(p, value),
        None => {
            let text = serde_json::to_string_pretty(value).expect("json values serialise");
            match writeln!(std::io::stdout().lock(), "{text}") {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::io("<stdout>", e)),
                _ => Ok(()),
            }
        }
    }
}

fn to_value<T: serde::Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("reports serialise")
}

fn fmt_time(t: Option<f64>) -> String {
    t.map_or("inf".to_string(), |t| t.to_string())
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::SampleBve {
            alpha_bar,
            n,
            seed,
            out,
        } => {
            let params = BveParams::standard(alpha_bar)?;
            let draws = bve::sample(&params, substream(seed, STREAM_BVE), n);
            write_csv(
                &out,
                &["z1", "z2", "simultaneous"],
                draws
                    .iter()
                    .map(|d| vec![d.z1.to_string(), d.z2.to_string(), d.simultaneous.to_string()]),
            )?;
        }
        Command::SimulateDefaults {
            config,
            n,
            seed,
            horizon,
            out,
        } => {
            let cfg = load(&config)?;
            let set = scenarios(
                &cfg,
                n.unwrap_or(cfg.mc.n),
                seed.unwrap_or(cfg.mc.seed),
                horizon.unwrap_or(cfg.contract.maturity),
            )?;
            write_csv(
                &out,
                &["tau1", "tau2", "tau", "simultaneous"],
                set.scenarios.iter().map(|s| {
                    vec![
                        fmt_time(s.tau1.time()),
                        fmt_time(s.tau2.time()),
                        fmt_time(s.tau.time()),
                        s.simultaneous.to_string(),
                    ]
                }),
            )?;
        }
        Command::PriceMc {
            config,
            drift,
            n,
            seed,
            out,
            profile,
            dump_paths,
        } => {
            let cfg = load(&config)?;
            let bundle = simulate(&cfg, n.unwrap_or(cfg.mc.n), seed.unwrap_or(cfg.mc.seed))?;
            if let Some(p) = dump_paths {
                bundle.dump_csv(&p)?;
            }
            let kind = DriftKind::from(drift);
            let s = price_mc_on(&cfg, &bundle, kind)?;
            if let Some(p) = profile {
                write_profile(&p, &s.profile(bundle.grid.times()))?;
            }
            emit(out.as_deref(), &to_value(&McSummary::of(kind, &s)))?;
        }
        Command::PricePde {
            config,
            drift,
            nx,
            nt,
            ni,
            out,
            surface,
        } => {
            let mut cfg = load(&config)?;
            cfg.pde.n_x = nx.unwrap_or(cfg.pde.n_x);
            cfg.pde.n_t = nt.unwrap_or(cfg.pde.n_t);
            cfg.pde.n_i = ni.unwrap_or(cfg.pde.n_i);
            let kind = DriftKind::from(drift);
            let s = price_pde(&cfg, kind)?;
            if let Some(p) = surface {
                s.surface.write_csv(&p, cfg.output.surface_stride)?;
            }
            emit(out.as_deref(), &to_value(&PdeSummary::of(kind, &s)))?;
        }
        Command::CompareDrifts {
            config,
            solvers,
            alpha_sweep: sweep,
            parallel_scenarios,
            out,
        } => {
            let cfg = load(&config)?;
            let solvers: Solvers = solvers.parse().map_err(usage)?;
            let report = compare_drifts(&cfg, solvers)?;
            let rows = match &sweep {
                Some(alphas) => Some(alpha_sweep(&cfg, alphas, parallel_scenarios)?),
                None => None,
            };
            let body = json!({ "comparison": to_value(&report), "alpha_sweep": to_value(&rows) });
            match &out {
                Some(dir) => {
                    write_json(&dir.join("comparison.json"), &body)?;
                    write_comparison(dir, &report)?;
                    if let Some(rows) = &rows {
                        write_csv(
                            &dir.join("alpha_sweep.csv"),
                            &["alpha_bar", "atom_probability", "v0_new", "v0_bfp", "delta", "delta_stderr"],
                            rows.iter().map(|r| {
                                [r.alpha_bar, r.atom_probability, r.v0_new, r.v0_bfp, r.delta, r.delta_stderr]
                                    .iter()
                                    .map(f64::to_string)
                                    .collect()
                            }),
                        )?;
                    }
                }
                None => emit(None, &body)?,
            }
            for f in &report.failures {
                eprintln!("{} {} failed: {}", f.solver, f.drift.label(), f.message);
            }
            return Ok(report.exit_code());
        }
        Command::Diagnose {
            which,
            config,
            n,
            scenarios,
            out,
        } => {
            let cfg = load(&config)?;
            let which = Diagnostic::parse_list(&which).map_err(usage)?;
            let mut sizes = DiagnosticSizes::for_config(&cfg);
            sizes.paths = n.unwrap_or(sizes.paths);
            sizes.scenarios = scenarios.unwrap_or(sizes.scenarios);
            let report = run_diagnostics(&cfg, &which, sizes)?;
            match &out {
                Some(dir) => {
                    write_json(&dir.join("diagnostics.json"), &report)?;
                    if let Some(c) = &report.compensator {
                        write_compensator(dir, c)?;
                    }
                }
                None => emit(None, &to_value(&report))?,
            }
        }
        Command::Validate { config, out } => {
            let cfg = load(&config)?;
            let report = validate_assumptions(&cfg);
            for c in &report.checks {
                eprintln!(
                    "{:<22} {:>12.6} {:>12.6} {}",
                    c.name,
                    c.narrow,
                    c.wide,
                    if c.pass { "pass" } else { "FAIL" }
                );
            }
            emit(out.as_deref(), &to_value(&report))?;
        }
        Command::Run {
            config,
            diagnostics,
            solvers,
            out,
        } => {
            let cfg = load(&config)?;
            let mut options = RunOptions::all();
            options.diagnostics = if diagnostics == "none" {
                Vec::new()
            } else {
                Diagnostic::parse_list(&diagnostics).map_err(usage)?
            };
            options.solvers = solvers.parse().map_err(usage)?;
            let dir = out.unwrap_or_else(|| cfg.output.dir.clone());
            let summary = run_scenario(&cfg, &options, &dir)?;
            eprintln!("wrote {} and {} tables", dir.join("summary.json").display(), summary.files.len());
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
