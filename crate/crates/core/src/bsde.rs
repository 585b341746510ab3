//! Regression Monte-Carlo solver for the backward equation of the contract
//! value, and Monte-Carlo checks of the filtering identities.
//!
//! Both drivers are written as the drift of `dV`, so that
//! `dV = B dt + Z dW` and `V_T = Φ(S_T)`. The new driver depends on the path
//! functional `I_t = ∫₀ᵗ D_u J_u du` and on `M¹ + M²`, the conditional
//! expectation of `I_T + D_T Φ(S_T)`, where `D = exp(-∫(r + λ))`. Those two
//! inputs are resolved by a Picard loop around the backward sweep.

use ndarray::Array2;
use serde::Serialize;

use crate::cashflows::{funding_a, neg, pos, theta_tilde, ContractTerms, StateSnapshot};
use crate::cox::{DefaultScenario, IntensityModel};
use crate::error::{Error, Result};
use crate::paths::{discount, MarketModel, PathBundle};
use crate::regression::{Projection, RegressionBasis};
use crate::stats::{Estimate, Moments};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftKind {
    /// Driver with the first-to-default survival process and the `K` terms.
    NewBve,
    /// Conditional-independence baseline.
    BfpBaseline,
}

impl DriftKind {
    pub fn label(self) -> &'static str {
        match self {
            DriftKind::NewBve => "new",
            DriftKind::BfpBaseline => "bfp",
        }
    }
}

impl std::str::FromStr for DriftKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "new" | "new_bve" => Ok(DriftKind::NewBve),
            "bfp" | "bfp_baseline" => Ok(DriftKind::BfpBaseline),
            _ => Err(format!("drift must be `new` or `bfp`, got `{s}`")),
        }
    }
}

impl std::fmt::Display for DriftKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Outer fixed-point controls. Convergence is declared when the change in
/// `v0` is below `tol · max(|v0|, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PicardSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PicardSettings {
    fn default() -> Self {
        PicardSettings {
            tol: 1e-4,
            max_iter: 20,
        }
    }
}

impl PicardSettings {
    pub fn converged(&self, prev: f64, next: f64) -> bool {
        (next - prev).abs() < self.tol * next.abs().max(1.0)
    }
}

/// Snapshot of the credit state for a driver. The baseline sees the
/// unconditional survival `G = 1` and the intensity `λ¹ + λ²`.
#[allow(clippy::too_many_arguments)]
pub fn credit_snapshot(
    kind: DriftKind,
    intensity: &IntensityModel,
    t: f64,
    x: f64,
    big1: f64,
    big2: f64,
    growth: f64,
) -> StateSnapshot {
    let (l1, l2) = intensity.rates(t, x);
    let cp = intensity.credit_point(l1, l2, big1, big2);
    let (g, lam) = match kind {
        DriftKind::NewBve => (cp.g, cp.lam),
        DriftKind::BfpBaseline => (1.0, l1 + l2),
    };
    StateSnapshot {
        t,
        x,
        v: 0.0,
        z: 0.0,
        g,
        lam1: l1,
        lam2: l2,
        lam,
        growth,
        k: cp.k,
    }
}

/// Running cash flow discounted into `I`:
/// `A + θ̃ + b LGD_I λ² ((1-α)V)⁺`.
pub fn running_j(terms: &ContractTerms, market: &MarketModel, snap: &StateSnapshot) -> f64 {
    let exposure = (1.0 - terms.alpha_coll.eval(snap.t)) * snap.v;
    funding_a(terms, market, snap)
        + theta_tilde(terms, snap)
        + terms.b() * terms.lgd_i * snap.lam2 * pos(exposure)
}

/// The four additive pieces of the new driver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftTerms {
    /// `(r + λ) V`
    pub discounting: f64,
    /// `-J / G`
    pub running: f64,
    /// `-e^{∫(r+λ)} K I / G`
    pub k_i: f64,
    /// `-e^{∫(r+λ)} K (M¹ + M²) / G`
    pub k_m: f64,
}

impl DriftTerms {
    pub fn total(&self) -> f64 {
        self.discounting + self.running + self.k_i + self.k_m
    }
}

pub fn drift_new_terms(
    terms: &ContractTerms,
    market: &MarketModel,
    snap: &StateSnapshot,
    accumulator: f64,
    m_sum: f64,
) -> Result<DriftTerms> {
    if !(snap.g > 0.0) {
        return Err(Error::Numeric(format!("survival G = {} at t = {}", snap.g, snap.t)));
    }
    let scale = snap.growth * snap.k / snap.g;
    Ok(DriftTerms {
        discounting: (market.r.eval(snap.t) + snap.lam) * snap.v,
        running: -running_j(terms, market, snap) / snap.g,
        k_i: -scale * accumulator,
        k_m: -scale * m_sum,
    })
}

/// Drift of `dV` under the new driver.
pub fn drift_new(
    terms: &ContractTerms,
    market: &MarketModel,
    snap: &StateSnapshot,
    accumulator: f64,
    m_sum: f64,
) -> Result<f64> {
    Ok(drift_new_terms(terms, market, snap, accumulator, m_sum)?.total())
}

/// Drift of `dV` under the baseline driver.
pub fn drift_bfp(terms: &ContractTerms, market: &MarketModel, snap: &StateSnapshot) -> f64 {
    let t = snap.t;
    let alpha = terms.alpha_coll.eval(t);
    let indicator = if snap.v > 0.0 { 1.0 } else { 0.0 };
    let coeff = (1.0 - alpha) * (terms.b() * terms.lgd_i * indicator * snap.lam2 - terms.f.eval(t))
        - snap.lam
        - terms.c.eval(t) * alpha;
    let hedge = terms.hedge.eval(t, snap.x, snap.v, snap.z);
    -(market.pi.eval(t, snap.x) + theta_tilde(terms, snap) + coeff * snap.v
        - (market.r.eval(t) - terms.h.eval(t)) * hedge)
}

/// `exp(∫₀^{t_k} (r + λ))` on every path by left-endpoint quadrature.
pub fn growth_matrix(
    kind: DriftKind,
    bundle: &PathBundle,
    intensity: &IntensityModel,
    market: &MarketModel,
) -> Array2<f64> {
    let (n, cols) = bundle.s.dim();
    let t = bundle.grid.times();
    let mut out = Array2::<f64>::zeros((n, cols));
    for p in 0..n {
        let mut log_growth = 0.0;
        out[[p, 0]] = 1.0;
        for k in 0..cols - 1 {
            let snap = credit_snapshot(
                kind,
                intensity,
                t[k],
                bundle.s[[p, k]],
                bundle.big_lambda1[[p, k]],
                bundle.big_lambda2[[p, k]],
                1.0,
            );
            log_growth += (market.r.eval(t[k]) + snap.lam) * bundle.grid.dt(k);
            out[[p, k + 1]] = log_growth.exp();
        }
    }
    out
}

/// Martingale check on a conditional-expectation process.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleCheck {
    /// Mean increment over each step with its standard error.
    pub increments: Vec<Estimate>,
    pub max_z: f64,
}

impl MartingaleCheck {
    fn of(m: &Array2<f64>) -> Self {
        let (n, cols) = m.dim();
        let increments: Vec<Estimate> = (0..cols - 1)
            .map(|k| {
                let mut mom = Moments::default();
                for p in 0..n {
                    mom.push(m[[p, k + 1]] - m[[p, k]]);
                }
                mom.estimate()
            })
            .collect();
        let max_z = increments
            .iter()
            .map(|e| e.z_score(0.0))
            .filter(|z| z.is_finite())
            .fold(0.0, f64::max);
        MartingaleCheck { increments, max_z }
    }
}

/// Accumulator and `M¹ + M²` along every path for a candidate value function.
#[derive(Debug, Clone)]
pub struct MSumEstimate {
    pub accumulator: Array2<f64>,
    pub m_sum: Array2<f64>,
    pub check: MartingaleCheck,
    pub max_condition: f64,
}

/// Runs the forward recursion `I_{k+1} = I_k + D_k J_k Δ` with `(V, Z)`
/// supplied by `value(k, x, I)`, then regresses the total
/// `I_M + D_M Φ(S_M)` on `(S_k, I_k)` at every step.
#[allow(clippy::too_many_arguments)]
pub fn estimate_m_sum(
    bundle: &PathBundle,
    terms: &ContractTerms,
    intensity: &IntensityModel,
    market: &MarketModel,
    growth: &Array2<f64>,
    value: &(dyn Fn(usize, f64, f64) -> (f64, f64) + Sync),
    basis: &RegressionBasis,
) -> Result<MSumEstimate> {
    let (n, cols) = bundle.s.dim();
    let m = cols - 1;
    let t = bundle.grid.times();
    let mut acc = Array2::<f64>::zeros((n, cols));
    let mut total = vec![0.0; n];
    for p in 0..n {
        let mut i = 0.0;
        for k in 0..m {
            let x = bundle.s[[p, k]];
            let (v, z) = value(k, x, i);
            let mut snap = credit_snapshot(
                DriftKind::NewBve,
                intensity,
                t[k],
                x,
                bundle.big_lambda1[[p, k]],
                bundle.big_lambda2[[p, k]],
                growth[[p, k]],
            );
            snap.v = v;
            snap.z = z;
            i += running_j(terms, market, &snap) / growth[[p, k]] * bundle.grid.dt(k);
            acc[[p, k + 1]] = i;
        }
        total[p] = i + market.phi.eval(bundle.s[[p, m]]) / growth[[p, m]];
    }
    let mut m_sum = Array2::<f64>::zeros((n, cols));
    m_sum.column_mut(m).assign(&ndarray::ArrayView1::from(&total));
    let mut max_condition: f64 = 1.0;
    for k in 0..m {
        let x = bundle.s.column(k).to_vec();
        let i = acc.column(k).to_vec();
        let fit = basis.fit(&x, Some(&i), &[&total])?;
        max_condition = max_condition.max(fit.condition);
        let fitted = fit.predict_all(0, &x, Some(&i));
        m_sum.column_mut(k).assign(&ndarray::ArrayView1::from(&fitted));
    }
    let check = MartingaleCheck::of(&m_sum);
    Ok(MSumEstimate {
        accumulator: acc,
        m_sum,
        check,
        max_condition,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McDiagnostics {
    pub picard_iters: usize,
    /// `v0` after each backward sweep.
    pub picard_trace: Vec<f64>,
    pub max_condition: f64,
    /// Smallest polynomial degree any regression fell back to.
    pub min_degree: usize,
    /// Martingale check of `M¹ + M²` (new driver only).
    pub m_sum_check: Option<MartingaleCheck>,
    pub floored_paths: usize,
}

#[derive(Debug, Clone)]
pub struct BackwardSolution {
    pub v0: f64,
    pub stderr: f64,
    /// `n × (M+1)` regression values; the last column is `Φ(S_T)`.
    pub v: Array2<f64>,
    /// `n × M` volatility estimates.
    pub z: Array2<f64>,
    pub accumulator: Array2<f64>,
    pub m_sum: Array2<f64>,
    /// Pathwise `Φ(S_T) - Σ B Δ`, whose mean is `v0`.
    pub pathwise: Vec<f64>,
    pub diagnostics: McDiagnostics,
}

struct Sweep {
    v: Array2<f64>,
    z: Array2<f64>,
    pathwise: Vec<f64>,
    v_fits: Vec<Projection>,
    z_fits: Vec<Projection>,
    max_condition: f64,
    min_degree: usize,
}

#[allow(clippy::too_many_arguments)]
fn backward_sweep(
    bundle: &PathBundle,
    terms: &ContractTerms,
    intensity: &IntensityModel,
    market: &MarketModel,
    kind: DriftKind,
    basis: &RegressionBasis,
    growth: &Array2<f64>,
    acc: &Array2<f64>,
    m_sum: &Array2<f64>,
) -> Result<Sweep> {
    let (n, cols) = bundle.s.dim();
    let m = cols - 1;
    let t = bundle.grid.times();
    let mut v = Array2::<f64>::zeros((n, cols));
    let mut z = Array2::<f64>::zeros((n, m));
    for p in 0..n {
        v[[p, m]] = market.phi.eval(bundle.s[[p, m]]);
    }
    let mut pathwise = v.column(m).to_vec();
    let mut v_fits = Vec::with_capacity(m);
    let mut z_fits = Vec::with_capacity(m);
    let mut max_condition: f64 = 1.0;
    let mut min_degree = basis.degree;
    for k in (0..m).rev() {
        let dt = bundle.grid.dt(k);
        let x = bundle.s.column(k).to_vec();
        let i = acc.column(k).to_vec();
        let i_ref = match kind {
            DriftKind::NewBve => Some(i.as_slice()),
            DriftKind::BfpBaseline => None,
        };
        let next = v.column(k + 1).to_vec();
        let z_target: Vec<f64> = (0..n).map(|p| next[p] * bundle.dw[[p, k]] / dt).collect();
        let z_fit = basis.fit(&x, i_ref, &[&z_target])?;
        let z_k = z_fit.predict_all(0, &x, i_ref);
        let mut v_target = vec![0.0; n];
        for p in 0..n {
            let mut snap = credit_snapshot(
                kind,
                intensity,
                t[k],
                x[p],
                bundle.big_lambda1[[p, k]],
                bundle.big_lambda2[[p, k]],
                growth[[p, k]],
            );
            snap.v = next[p];
            snap.z = z_k[p];
            let b = match kind {
                DriftKind::NewBve => drift_new(terms, market, &snap, i[p], m_sum[[p, k]])?,
                DriftKind::BfpBaseline => drift_bfp(terms, market, &snap),
            };
            v_target[p] = next[p] - b * dt;
            pathwise[p] -= b * dt;
        }
        let v_fit = basis.fit(&x, i_ref, &[&v_target])?;
        let v_k = v_fit.predict_all(0, &x, i_ref);
        v.column_mut(k).assign(&ndarray::ArrayView1::from(&v_k));
        z.column_mut(k).assign(&ndarray::ArrayView1::from(&z_k));
        max_condition = max_condition.max(v_fit.condition).max(z_fit.condition);
        min_degree = min_degree.min(v_fit.degree).min(z_fit.degree);
        v_fits.push(v_fit);
        z_fits.push(z_fit);
    }
    v_fits.reverse();
    z_fits.reverse();
    Ok(Sweep {
        v,
        z,
        pathwise,
        v_fits,
        z_fits,
        max_condition,
        min_degree,
    })
}

/// Backward induction `V_k = E[V_{k+1} - B Δ | S_k, I_k]` with
/// `Z_k = E[V_{k+1} ΔW_k | S_k, I_k] / Δ`, both by regression. The new driver
/// runs inside a Picard loop on `(I, M¹ + M²)`.
#[allow(clippy::too_many_arguments)]
pub fn solve_bsde_mc(
    bundle: &PathBundle,
    terms: &ContractTerms,
    intensity: &IntensityModel,
    market: &MarketModel,
    drift: DriftKind,
    basis: &RegressionBasis,
    picard: &PicardSettings,
) -> Result<BackwardSolution> {
    if (bundle.grid.horizon() - terms.maturity).abs() > 1e-12 * terms.maturity.max(1.0) {
        return Err(Error::Usage(format!(
            "path grid ends at {} but the contract matures at {}",
            bundle.grid.horizon(),
            terms.maturity
        )));
    }
    let (n, cols) = bundle.s.dim();
    let m = cols - 1;
    let growth = growth_matrix(drift, bundle, intensity, market);

    if drift == DriftKind::BfpBaseline {
        let zeros = Array2::<f64>::zeros((n, cols));
        let sweep = backward_sweep(
            bundle, terms, intensity, market, drift, basis, &growth, &zeros, &zeros,
        )?;
        return Ok(finish(sweep, zeros.clone(), zeros, bundle, 1, vec![], None));
    }

    // Iteration 0: no running term in I, and M¹ + M² is the discounted payoff.
    let mut acc = Array2::<f64>::zeros((n, cols));
    let payoff: Vec<f64> = (0..n)
        .map(|p| market.phi.eval(bundle.s[[p, m]]) / growth[[p, m]])
        .collect();
    let mut m_sum = Array2::<f64>::zeros((n, cols));
    m_sum.column_mut(m).assign(&ndarray::ArrayView1::from(&payoff));
    for k in 0..m {
        let x = bundle.s.column(k).to_vec();
        let fit = basis.fit(&x, None, &[&payoff])?;
        let fitted = fit.predict_all(0, &x, None);
        m_sum.column_mut(k).assign(&ndarray::ArrayView1::from(&fitted));
    }

    let mut trace = Vec::new();
    let mut check = None;
    for iter in 1..=picard.max_iter {
        let sweep = backward_sweep(
            bundle, terms, intensity, market, drift, basis, &growth, &acc, &m_sum,
        )?;
        let v0 = sweep.v[[0, 0]];
        let done = trace.last().is_some_and(|&prev| picard.converged(prev, v0));
        trace.push(v0);
        log::debug!("mc picard iteration {iter}: v0 = {v0}");
        if done {
            return Ok(finish(sweep, acc, m_sum, bundle, iter, trace, check));
        }
        let value = |k: usize, x: f64, i: f64| {
            (sweep.v_fits[k].predict(0, x, i), sweep.z_fits[k].predict(0, x, i))
        };
        let est = estimate_m_sum(bundle, terms, intensity, market, &growth, &value, basis)?;
        acc = est.accumulator;
        m_sum = est.m_sum;
        check = Some(est.check);
    }
    Err(Error::NonConvergence {
        solver: "monte-carlo picard",
        iterations: picard.max_iter,
        trace,
    })
}

fn finish(
    sweep: Sweep,
    accumulator: Array2<f64>,
    m_sum: Array2<f64>,
    bundle: &PathBundle,
    picard_iters: usize,
    picard_trace: Vec<f64>,
    m_sum_check: Option<MartingaleCheck>,
) -> BackwardSolution {
    let est = Estimate::from_samples(&sweep.pathwise);
    let picard_trace = if picard_trace.is_empty() {
        vec![sweep.v[[0, 0]]]
    } else {
        picard_trace
    };
    BackwardSolution {
        v0: sweep.v[[0, 0]],
        stderr: est.stderr,
        v: sweep.v,
        z: sweep.z,
        accumulator,
        m_sum,
        pathwise: sweep.pathwise,
        diagnostics: McDiagnostics {
            picard_iters,
            picard_trace,
            max_condition: sweep.max_condition,
            min_degree: sweep.min_degree,
            m_sum_check,
            floored_paths: bundle.floored,
        },
    }
}

impl BackwardSolution {
    /// `(t, mean V, mean Z)` rows; `Z` is reported on the left node of each step.
    pub fn profile(&self, times: &[f64]) -> Vec<(f64, f64, f64)> {
        let n = self.v.nrows() as f64;
        times
            .iter()
            .enumerate()
            .map(|(k, &t)| {
                let mv = self.v.column(k).sum() / n;
                let mz = if k < self.z.ncols() {
                    self.z.column(k).sum() / n
                } else {
                    f64::NAN
                };
                (t, mv, mz)
            })
            .collect()
    }
}

/// Two Monte-Carlo estimates of the same quantity and their distance in
/// combined standard errors. The right-hand side is computed with both
/// candidate intensities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub name: String,
    pub start: f64,
    pub horizon: f64,
    pub lhs: Estimate,
    /// Right-hand side with the hazard of `-ln G`.
    pub rhs_reference: Estimate,
    pub z_reference: f64,
    /// Right-hand side with `(λ¹ + λ²) / G`.
    pub rhs_compensator: Estimate,
    pub z_compensator: f64,
}

impl IdentityReport {
    fn new(name: &str, start: f64, horizon: f64, lhs: &[f64], rr: &[f64], rc: &[f64]) -> Self {
        let lhs = Estimate::from_samples(lhs);
        let rhs_reference = Estimate::from_samples(rr);
        let rhs_compensator = Estimate::from_samples(rc);
        let z = |r: &Estimate| {
            let d = (lhs.mean - r.mean).abs();
            if d == 0.0 {
                0.0
            } else {
                d / (lhs.stderr.powi(2) + r.stderr.powi(2)).sqrt()
            }
        };
        IdentityReport {
            name: name.to_string(),
            start,
            horizon,
            z_reference: z(&rhs_reference),
            z_compensator: z(&rhs_compensator),
            lhs,
            rhs_reference,
            rhs_compensator,
        }
    }

    /// Agreement within three combined standard errors for the reference
    /// intensity.
    pub fn passes(&self) -> bool {
        self.z_reference < 3.0
    }
}

struct PathCredit<'a> {
    bundle: &'a PathBundle,
    intensity: &'a IntensityModel,
    market: &'a MarketModel,
    scenarios: Vec<DefaultScenario>,
}

impl<'a> PathCredit<'a> {
    fn new(bundle: &'a PathBundle, intensity: &'a IntensityModel, market: &'a MarketModel) -> Result<Self> {
        Ok(PathCredit {
            bundle,
            intensity,
            market,
            scenarios: bundle.default_scenarios(intensity)?,
        })
    }

    /// `(ln G(t), ∫₀ᵗ (λ¹+λ²)/G)` on path `p`.
    fn logs(&self, p: usize, t: f64) -> Result<(f64, f64)> {
        let h = self.bundle.hazards(p);
        let (b1, b2) = h.cumulative_at(t)?;
        let log_g = self.intensity.survival_from_cumulative(b1, b2).ln();
        Ok((log_g, h.compensator_integral(self.intensity, t)?))
    }

    fn discount(&self, discounted: bool, s: f64, t: f64) -> Result<f64> {
        if discounted {
            discount(self.market, s, t)
        } else {
            Ok(1.0)
        }
    }
}

/// Terminal-payoff identity
/// `E[D(t,T) X 1{τ>T} | τ>t] = E[X D(t,T) e^{-∫ₜᵀ λ}]`, both sides weighted
/// by `1{τ>t}`. With `discounted = false` the discount factor is dropped.
#[allow(clippy::too_many_arguments)]
pub fn lando_identity_check(
    bundle: &PathBundle,
    intensity: &IntensityModel,
    market: &MarketModel,
    x_fn: &dyn Fn(f64) -> f64,
    start: f64,
    horizon: f64,
    discounted: bool,
) -> Result<IdentityReport> {
    let kt = bundle.node(horizon)?;
    bundle.node(start)?;
    if start > horizon {
        return Err(Error::Domain(format!("start {start} after horizon {horizon}")));
    }
    let pc = PathCredit::new(bundle, intensity, market)?;
    let d = pc.discount(discounted, start, horizon)?;
    let n = bundle.n_paths();
    let (mut lhs, mut rr, mut rc) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for p in 0..n {
        let sc = &pc.scenarios[p];
        if sc.tau.occurred_by(start) {
            continue;
        }
        let x = x_fn(bundle.s[[p, kt]]) * d;
        let (g0, c0) = pc.logs(p, start)?;
        let (g1, c1) = pc.logs(p, horizon)?;
        lhs[p] = if sc.tau.occurred_by(horizon) { 0.0 } else { x };
        rr[p] = x * (g1 - g0).exp();
        rc[p] = x * (-(c1 - c0)).exp();
    }
    let name = if discounted { "terminal payoff, discounted" } else { "terminal payoff, undiscounted" };
    Ok(IdentityReport::new(name, start, horizon, &lhs, &rr, &rc))
}

/// Running-payout identity
/// `E[∫ₜᵀ g(S) 1{τ>s} D(t,s) ds] = E[∫ₜᵀ g(S) D(t,s) e^{-∫ₜˢ λ} ds]` on the
/// simulation grid (left-endpoint sums), weighted by `1{τ>t}`.
pub fn continuous_payout_check(
    bundle: &PathBundle,
    intensity: &IntensityModel,
    market: &MarketModel,
    g_fn: &dyn Fn(f64) -> f64,
    start: f64,
    horizon: f64,
) -> Result<IdentityReport> {
    let k0 = bundle.node(start)?;
    let k1 = bundle.node(horizon)?;
    if k0 > k1 {
        return Err(Error::Domain(format!("start {start} after horizon {horizon}")));
    }
    let pc = PathCredit::new(bundle, intensity, market)?;
    let t = bundle.grid.times();
    let d: Vec<f64> = (k0..k1)
        .map(|k| discount(market, start, t[k]))
        .collect::<Result<_>>()?;
    let n = bundle.n_paths();
    let (mut lhs, mut rr, mut rc) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for p in 0..n {
        let sc = &pc.scenarios[p];
        if sc.tau.occurred_by(start) {
            continue;
        }
        let (g0, c0) = pc.logs(p, start)?;
        for k in k0..k1 {
            let w = g_fn(bundle.s[[p, k]]) * d[k - k0] * bundle.grid.dt(k);
            let (g1, c1) = pc.logs(p, t[k])?;
            if !sc.tau.occurred_by(t[k]) {
                lhs[p] += w;
            }
            rr[p] += w * (g1 - g0).exp();
            rc[p] += w * (-(c1 - c0)).exp();
        }
    }
    Ok(IdentityReport::new("running payout", start, horizon, &lhs, &rr, &rc))
}

/// Mean jump of the conditional-expectation process at the default time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrthogonalityReport {
    pub estimate: Estimate,
    pub z_score: f64,
    pub defaults_in_horizon: usize,
}

/// `Y_k = E[Φ(S_T) e^{-∫₀ᵀ(r+λ)} | S_k]` by regression; reports the mean of
/// `(Y_{k+1} - Y_k) 1{τ ∈ (t_k, t_{k+1}]}` over all paths.
pub fn orthogonality_check(
    bundle: &PathBundle,
    intensity: &IntensityModel,
    market: &MarketModel,
    basis: &RegressionBasis,
) -> Result<OrthogonalityReport> {
    let (n, cols) = bundle.s.dim();
    let m = cols - 1;
    let growth = growth_matrix(DriftKind::NewBve, bundle, intensity, market);
    let target: Vec<f64> = (0..n)
        .map(|p| market.phi.eval(bundle.s[[p, m]]) / growth[[p, m]])
        .collect();
    let mut y = Array2::<f64>::zeros((n, cols));
    y.column_mut(m).assign(&ndarray::ArrayView1::from(&target));
    for k in 0..m {
        let x = bundle.s.column(k).to_vec();
        let fit = basis.fit(&x, None, &[&target])?;
        let fitted = fit.predict_all(0, &x, None);
        y.column_mut(k).assign(&ndarray::ArrayView1::from(&fitted));
    }
    let scenarios = bundle.default_scenarios(intensity)?;
    let t = bundle.grid.times();
    let mut jumps = vec![0.0; n];
    let mut defaults = 0;
    for (p, sc) in scenarios.iter().enumerate() {
        if let Some(tau) = sc.tau.time() {
            if tau > 0.0 && tau <= t[m] {
                let k = t.partition_point(|&s| s < tau).max(1) - 1;
                jumps[p] = y[[p, k + 1]] - y[[p, k]];
                defaults += 1;
            }
        }
    }
    let estimate = Estimate::from_samples(&jumps);
    Ok(OrthogonalityReport {
        z_score: estimate.z_score(0.0),
        estimate,
        defaults_in_horizon: defaults,
    })
}

/// `(1-α) V` split into its parts, exposed for reports.
pub fn exposure_parts(terms: &ContractTerms, t: f64, v: f64) -> (f64, f64) {
    let e = (1.0 - terms.alpha_coll.eval(t)) * v;
    (pos(e), neg(e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcs::{DividendFn, HedgeFn, Payoff, TimeFn};
    use proptest::prelude::*;

    fn snap(v: f64, z: f64) -> StateSnapshot {
        StateSnapshot {
            t: 0.4,
            x: 95.0,
            v,
            z,
            g: 1.0,
            growth: 1.0,
            ..Default::default()
        }
    }

    #[test]
    fn degenerate_drifts_are_discounting() {
        let terms = ContractTerms::riskless(0.03, 1.0);
        let mut m = MarketModel::black_scholes(100.0, 0.03, 0.2, Payoff::Call(100.0));
        let s = snap(7.0, 2.0);
        assert!((drift_new(&terms, &m, &s, 0.5, 3.0).unwrap() - 0.21).abs() < 1e-15);
        assert!((drift_bfp(&terms, &m, &s) - 0.21).abs() < 1e-15);
        m.pi = DividendFn::Constant(1.0);
        assert!((drift_new(&terms, &m, &s, 0.5, 3.0).unwrap() - (0.21 - 1.0)).abs() < 1e-15);
        assert!((drift_bfp(&terms, &m, &s) - (0.21 - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn new_drift_term_by_term() {
        // Every input a short decimal; the expected value is evaluated by
        // hand term by term.
        let terms = ContractTerms {
            c: TimeFn::Constant(0.01),
            f: TimeFn::Constant(0.03),
            h: TimeFn::Constant(0.015),
            lgd_i: 0.4,
            lgd_c: 0.6,
            alpha_coll: TimeFn::Constant(0.25),
            bilateral: true,
            maturity: 1.0,
            hedge: HedgeFn::Delta,
            simultaneous_rule: Default::default(),
        };
        let mut m = MarketModel::black_scholes(100.0, 0.02, 0.2, Payoff::Call(100.0));
        m.pi = DividendFn::Constant(0.5);
        let s = StateSnapshot {
            t: 0.5,
            x: 100.0,
            v: 8.0,
            z: 4.0,
            g: 0.8,
            lam1: 0.02,
            lam2: 0.03,
            lam: 0.0625,
            growth: 1.25,
            k: 0.08,
        };
        // A = 0.5 + 0.02·0.25·8 + (-0.01)·8 + 0.005·4 = 0.48
        // θ̃ = 0.8·(0.0625·8 - 0.02·0.6·6) = 0.3424
        // extra = 0.4·0.03·6 = 0.072, so J = 0.8944
        // (r+λ)v = 0.0825·8 = 0.66; J/G = 1.118; scale = 1.25·0.08/0.8 = 0.125
        let expect = 0.66 - 1.118 - 0.125 * 0.3 - 0.125 * 5.0;
        let got = drift_new(&terms, &m, &s, 0.3, 5.0).unwrap();
        assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");

        // baseline with G = 1, λ = 0.05:
        // θ̃ = 0.05·8 - 0.02·0.6·6 = 0.328
        // coeff = 0.75·(0.4·0.03 - 0.03) - 0.05 - 0.0025 = -0.066
        // B = -(0.5 + 0.328 - 0.528 - 0.005·4) = -0.28
        let sb = StateSnapshot { g: 1.0, lam: 0.05, ..s };
        assert!((drift_bfp(&terms, &m, &sb) + 0.28).abs() < 1e-12);
    }

    #[test]
    fn guard_on_vanishing_survival() {
        let terms = ContractTerms::riskless(0.0, 1.0);
        let m = MarketModel::black_scholes(100.0, 0.0, 0.2, Payoff::Call(100.0));
        let s = StateSnapshot { g: 0.0, ..snap(1.0, 0.0) };
        assert!(matches!(drift_new(&terms, &m, &s, 0.0, 0.0), Err(Error::Numeric(_))));
    }

    #[test]
    fn baseline_indicator_drops_for_negative_value() {
        let mut terms = ContractTerms::riskless(0.02, 1.0);
        terms.lgd_i = 0.4;
        let m = MarketModel::black_scholes(100.0, 0.02, 0.2, Payoff::Call(100.0));
        let s = StateSnapshot { lam2: 0.03, lam: 0.03, ..snap(-5.0, 0.0) };
        let off = drift_bfp(&terms, &m, &s);
        terms.bilateral = true;
        let on = drift_bfp(&terms, &m, &s);
        // only θ̃'s investor term differs; the indicator term is zero for v < 0
        assert!((on - off + 0.03 * 0.4 * 5.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn degenerate_equivalence(
            r in 0.0f64..0.1, v in -50.0f64..50.0, z in -20.0f64..20.0,
            pi in -2.0f64..2.0, alpha in 0.0f64..1.0, acc in -5.0f64..5.0, msum in -50.0f64..50.0,
            lgd_c in 0.0f64..1.0, lgd_i in 0.0f64..1.0,
        ) {
            let terms = ContractTerms {
                lgd_c, lgd_i, bilateral: true,
                alpha_coll: TimeFn::Constant(alpha),
                hedge: HedgeFn::Delta,
                ..ContractTerms::riskless(r, 1.0)
            };
            let mut m = MarketModel::black_scholes(100.0, r, 0.2, Payoff::Call(100.0));
            m.pi = DividendFn::Constant(pi);
            let s = snap(v, z);
            let a = drift_new(&terms, &m, &s, acc, msum).unwrap();
            let b = drift_bfp(&terms, &m, &s);
            prop_assert!((a - (r * v - pi)).abs() < 1e-12);
            prop_assert!((b - (r * v - pi)).abs() < 1e-12);
        }
    }
}
