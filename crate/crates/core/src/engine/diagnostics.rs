//! Monte-Carlo diagnostics of the credit model. All of them draw from the
//! `diagnostics` substream of the master seed, so adding or removing one
//! never changes a price.

use serde::Serialize;

use crate::bsde::{continuous_payout_check, lando_identity_check, orthogonality_check, IdentityReport, OrthogonalityReport};
use crate::cox::{compensator_diagnostic, CompensatorReport};
use crate::error::Result;
use crate::rng::{substream, STREAM_DIAGNOSTICS};

use super::config::RunConfig;
use super::{scenarios, simulate};

/// Number of report times of the compensator diagnostic.
pub const COMPENSATOR_TIMES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Diagnostic {
    Compensator,
    Lando,
    Payout,
    Orthogonality,
}

impl Diagnostic {
    pub const ALL: [Diagnostic; 4] = [
        Diagnostic::Compensator,
        Diagnostic::Lando,
        Diagnostic::Payout,
        Diagnostic::Orthogonality,
    ];

    /// Parses one name or `all`.
    pub fn parse_list(s: &str) -> std::result::Result<Vec<Diagnostic>, String> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim) {
            match part {
                "all" => out.extend(Diagnostic::ALL),
                "compensator" => out.push(Diagnostic::Compensator),
                "lando" => out.push(Diagnostic::Lando),
                "payout" => out.push(Diagnostic::Payout),
                "orthogonality" => out.push(Diagnostic::Orthogonality),
                _ => {
                    return Err(format!(
                        "unknown diagnostic `{part}` (compensator, lando, payout, orthogonality, all)"
                    ))
                }
            }
        }
        out.sort_by_key(|d| *d as u8);
        out.dedup();
        Ok(out)
    }
}

/// Sample sizes of the diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagnosticSizes {
    /// Default scenarios for the compensator diagnostic.
    pub scenarios: usize,
    /// Asset paths for the path-based checks.
    pub paths: usize,
}

impl DiagnosticSizes {
    pub fn for_config(config: &RunConfig) -> Self {
        DiagnosticSizes {
            scenarios: 1_000_000,
            paths: config.mc.n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct DiagnosticsReport {
    pub compensator: Option<CompensatorReport>,
    pub lando: Option<Vec<IdentityReport>>,
    pub payout: Option<IdentityReport>,
    pub orthogonality: Option<OrthogonalityReport>,
}

fn diag_seed(config: &RunConfig) -> u64 {
    substream(config.mc.seed, STREAM_DIAGNOSTICS)
}

/// Martingale drift of `1{τ ≤ t}` minus each candidate compensator at ten
/// equally spaced times up to maturity.
pub fn compensator(config: &RunConfig, n: usize) -> Result<CompensatorReport> {
    let horizon = config.contract.maturity;
    let set = scenarios(config, n, diag_seed(config), horizon)?;
    let times: Vec<f64> = (1..=COMPENSATOR_TIMES)
        .map(|k| horizon * k as f64 / COMPENSATOR_TIMES as f64)
        .collect();
    compensator_diagnostic(&config.intensity, &set, &times)
}

/// Conditioning time of the identity checks: the grid node nearest `T/4`.
fn identity_start(config: &RunConfig) -> f64 {
    let k = config.mc.steps / 4;
    config.contract.maturity * k as f64 / config.mc.steps as f64
}

/// Terminal-payoff identities, undiscounted and discounted, with the payoff
/// as the random variable.
pub fn lando(config: &RunConfig, n: usize) -> Result<Vec<IdentityReport>> {
    let bundle = simulate(config, n, diag_seed(config))?;
    let phi = |x: f64| config.market.phi.eval(x);
    let start = identity_start(config);
    let horizon = config.contract.maturity;
    [false, true]
        .iter()
        .map(|&d| lando_identity_check(&bundle, &config.intensity, &config.market, &phi, start, horizon, d))
        .collect()
}

/// Running-payout identity with the payoff as the payout rate.
pub fn payout(config: &RunConfig, n: usize) -> Result<IdentityReport> {
    let bundle = simulate(config, n, diag_seed(config))?;
    let phi = |x: f64| config.market.phi.eval(x);
    continuous_payout_check(
        &bundle,
        &config.intensity,
        &config.market,
        &phi,
        identity_start(config),
        config.contract.maturity,
    )
}

/// Mean jump of the conditional expectation of the discounted payoff at the
/// default time.
pub fn orthogonality(config: &RunConfig, n: usize) -> Result<OrthogonalityReport> {
    let bundle = simulate(config, n, diag_seed(config))?;
    orthogonality_check(&bundle, &config.intensity, &config.market, &config.mc.basis)
}

pub fn run_diagnostics(config: &RunConfig, which: &[Diagnostic], sizes: DiagnosticSizes) -> Result<DiagnosticsReport> {
    let mut out = DiagnosticsReport::default();
    for d in which {
        match d {
            Diagnostic::Compensator => out.compensator = Some(compensator(config, sizes.scenarios)?),
            Diagnostic::Lando => out.lando = Some(lando(config, sizes.paths)?),
            Diagnostic::Payout => out.payout = Some(payout(config, sizes.paths)?),
            Diagnostic::Orthogonality => out.orthogonality = Some(orthogonality(config, sizes.paths)?),
        }
    }
    Ok(out)
}
