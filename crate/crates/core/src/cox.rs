//! Cox construction of the two default times and the first-to-default
//! survival process.
//!
//! With cumulative hazards `Λⁱ(t) = ∫₀ᵗ λⁱ ds` and a BVE pair `(Z¹, Z²)`,
//! `τⁱ = inf{t : Λⁱ(t) ≥ Zⁱ}`. The survival of `τ = τ¹ ∧ τ²` given the
//! market filtration is
//!
//! ```text
//! G(t) = exp(-(Λ¹ + Λ² + ᾱ max(Λ¹, Λ²)))
//! ```
//!
//! Pricing uses the compensator intensity `λ = (λ¹ + λ²) / G` and the bounded
//! process `K = 3/2 (λ¹ + λ²) + 1/2 (λ¹ - λ²) sign(λ¹ - λ²)`.

use serde::Serialize;

use crate::bve::{BveParams, BveSample};
use crate::error::{Error, Result};
use crate::funcs::IntensityFn;
use crate::stats::Moments;

/// Which difference decides the sign in `K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SignMode {
    /// `sign(λ¹_t - λ²_t)`
    #[default]
    Instantaneous,
    /// `sign(Λ¹_t - Λ²_t)`, the derivative of `max(Λ¹, Λ²)`
    Integrated,
}

impl std::str::FromStr for SignMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "instantaneous" => Ok(SignMode::Instantaneous),
            "integrated" => Ok(SignMode::Integrated),
            _ => Err(format!("sign_mode must be `instantaneous` or `integrated`, got `{s}`")),
        }
    }
}

/// The two intensities and the common-shock weight.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityModel {
    /// Counterparty.
    pub lambda1: IntensityFn,
    /// Investor.
    pub lambda2: IntensityFn,
    pub alpha_bar: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub sign_mode: SignMode,
}

/// `G`, the compensator intensity and `K` at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CreditPoint {
    pub g: f64,
    pub lam: f64,
    pub k: f64,
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `3/2 (l1 + l2) + 1/2 (l1 - l2) s` with `s = sign(d)`.
pub fn k_value(l1: f64, l2: f64, d: f64) -> f64 {
    1.5 * (l1 + l2) + 0.5 * (l1 - l2) * sign(d)
}

impl IntensityModel {
    pub fn new(lambda1: IntensityFn, lambda2: IntensityFn, alpha_bar: f64) -> Result<Self> {
        if !(alpha_bar >= 0.0 && alpha_bar.is_finite()) {
            return Err(Error::Model(format!(
                "alpha_bar must be finite and non-negative, got {alpha_bar}"
            )));
        }
        Ok(IntensityModel {
            lambda1,
            lambda2,
            alpha_bar,
            lambda_min: 0.0,
            lambda_max: 1.0,
            sign_mode: SignMode::Instantaneous,
        })
    }

    pub fn constant(l1: f64, l2: f64, alpha_bar: f64) -> Result<Self> {
        Self::new(IntensityFn::Constant(l1), IntensityFn::Constant(l2), alpha_bar)
    }

    /// BVE law of `(Z¹, Z²)` with unit idiosyncratic rates.
    pub fn bve_params(&self) -> Result<BveParams> {
        BveParams::standard(self.alpha_bar)
    }

    pub fn rates(&self, t: f64, x: f64) -> (f64, f64) {
        (self.lambda1.eval(t, x), self.lambda2.eval(t, x))
    }

    pub fn is_state_free(&self) -> bool {
        self.lambda1.is_state_free() && self.lambda2.is_state_free()
    }

    /// `G = exp(-(Λ¹ + Λ² + ᾱ max(Λ¹, Λ²)))`
    pub fn survival_from_cumulative(&self, big1: f64, big2: f64) -> f64 {
        (-(big1 + big2 + self.alpha_bar * big1.max(big2))).exp()
    }

    pub fn credit_point(&self, l1: f64, l2: f64, big1: f64, big2: f64) -> CreditPoint {
        let g = self.survival_from_cumulative(big1, big2);
        let d = match self.sign_mode {
            SignMode::Instantaneous => l1 - l2,
            SignMode::Integrated => big1 - big2,
        };
        CreditPoint {
            g,
            lam: (l1 + l2) / g,
            k: k_value(l1, l2, d),
        }
    }
}

/// `K` at `(t, x)` in the instantaneous-sign form.
pub fn k_process(model: &IntensityModel, t: f64, x: f64) -> f64 {
    let (l1, l2) = model.rates(t, x);
    k_value(l1, l2, l1 - l2)
}

/// Cumulative hazards of one scenario on its time grid. Between nodes the
/// cumulative hazards are linear, so the rate on `[t_k, t_{k+1})` is the
/// segment slope.
#[derive(Debug, Clone, Copy)]
pub struct HazardView<'a> {
    grid: &'a [f64],
    big1: &'a [f64],
    big2: &'a [f64],
}

impl<'a> HazardView<'a> {
    pub fn new(grid: &'a [f64], big1: &'a [f64], big2: &'a [f64]) -> Result<Self> {
        if grid.len() < 2 || big1.len() != grid.len() || big2.len() != grid.len() {
            return Err(Error::Model(
                "hazard paths must match the time grid and have at least two nodes".into(),
            ));
        }
        for path in [big1, big2] {
            if path[0] != 0.0 {
                return Err(Error::Model("cumulative hazard must start at 0".into()));
            }
            if path.windows(2).any(|w| !(w[1] >= w[0])) {
                return Err(Error::Model("cumulative hazard path is not non-decreasing".into()));
            }
        }
        Ok(HazardView { grid, big1, big2 })
    }

    pub fn grid(&self) -> &'a [f64] {
        self.grid
    }

    pub fn horizon(&self) -> f64 {
        self.grid[self.grid.len() - 1]
    }

    /// Segment index `k` with `t ∈ [t_k, t_{k+1}]`.
    fn segment(&self, t: f64) -> Result<usize> {
        if !(t >= 0.0) || t > self.horizon() {
            return Err(Error::Domain(format!(
                "time {t} outside hazard horizon [0, {}]",
                self.horizon()
            )));
        }
        let k = self.grid.partition_point(|&s| s <= t);
        Ok(k.saturating_sub(1).min(self.grid.len() - 2))
    }

    pub fn cumulative_at(&self, t: f64) -> Result<(f64, f64)> {
        let k = self.segment(t)?;
        let w = (t - self.grid[k]) / (self.grid[k + 1] - self.grid[k]);
        let lerp = |p: &[f64]| p[k] + w * (p[k + 1] - p[k]);
        Ok((lerp(self.big1), lerp(self.big2)))
    }

    pub fn rates_at(&self, t: f64) -> Result<(f64, f64)> {
        let k = self.segment(t)?;
        let dt = self.grid[k + 1] - self.grid[k];
        Ok((
            (self.big1[k + 1] - self.big1[k]) / dt,
            (self.big2[k + 1] - self.big2[k]) / dt,
        ))
    }

    fn first_crossing(&self, path: &[f64], z: f64) -> DefaultTime {
        let k = path.partition_point(|&l| l < z);
        if k == path.len() {
            return DefaultTime::Never;
        }
        if k == 0 {
            return DefaultTime::At(0.0);
        }
        let (l0, l1) = (path[k - 1], path[k]);
        let (t0, t1) = (self.grid[k - 1], self.grid[k]);
        DefaultTime::At(t0 + (z - l0) / (l1 - l0) * (t1 - t0))
    }

    /// `∫₀ˢ (λ¹ + λ²) / G du`, exact for piecewise-linear hazards whose
    /// ordering does not flip inside a segment.
    pub fn compensator_integral(&self, model: &IntensityModel, s: f64) -> Result<f64> {
        let end = self.segment(s)?;
        let mut total = 0.0;
        for k in 0..=end {
            let t0 = self.grid[k];
            let t1 = if k == end { s } else { self.grid[k + 1] };
            if t1 <= t0 {
                continue;
            }
            let dt_full = self.grid[k + 1] - t0;
            let c1 = (self.big1[k + 1] - self.big1[k]) / dt_full;
            let c2 = (self.big2[k + 1] - self.big2[k]) / dt_full;
            let ref0 = -model.survival_from_cumulative(self.big1[k], self.big2[k]).ln();
            let lead = if self.big1[k] > self.big2[k] {
                c1
            } else if self.big1[k] < self.big2[k] {
                c2
            } else {
                c1.max(c2)
            };
            let slope = c1 + c2 + model.alpha_bar * lead;
            let h = t1 - t0;
            let growth = if slope.abs() * h > 1e-12 {
                ((slope * h).exp() - 1.0) / slope
            } else {
                h
            };
            total += (c1 + c2) * ref0.exp() * growth;
        }
        Ok(total)
    }
}

/// Owned cumulative hazards for a single deterministic scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct HazardPaths {
    pub grid: Vec<f64>,
    pub big1: Vec<f64>,
    pub big2: Vec<f64>,
}

impl HazardPaths {
    /// Left-endpoint accumulation of the intensities along a fixed state path
    /// (`x_path[k]` is the asset price at `grid[k]`).
    pub fn accumulate(model: &IntensityModel, grid: &[f64], x_path: &[f64]) -> Self {
        let mut big1 = vec![0.0; grid.len()];
        let mut big2 = vec![0.0; grid.len()];
        for k in 0..grid.len() - 1 {
            let dt = grid[k + 1] - grid[k];
            let (l1, l2) = model.rates(grid[k], x_path[k]);
            big1[k + 1] = big1[k] + l1 * dt;
            big2[k + 1] = big2[k] + l2 * dt;
        }
        HazardPaths {
            grid: grid.to_vec(),
            big1,
            big2,
        }
    }

    pub fn deterministic(model: &IntensityModel, grid: &[f64], x: f64) -> Self {
        Self::accumulate(model, grid, &vec![x; grid.len()])
    }

    pub fn view(&self) -> Result<HazardView<'_>> {
        HazardView::new(&self.grid, &self.big1, &self.big2)
    }
}

/// A default time, or no default within the horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DefaultTime {
    At(f64),
    Never,
}

impl DefaultTime {
    pub fn min(self, other: DefaultTime) -> DefaultTime {
        match (self, other) {
            (DefaultTime::At(a), DefaultTime::At(b)) => DefaultTime::At(a.min(b)),
            (DefaultTime::At(a), DefaultTime::Never) | (DefaultTime::Never, DefaultTime::At(a)) => {
                DefaultTime::At(a)
            }
            (DefaultTime::Never, DefaultTime::Never) => DefaultTime::Never,
        }
    }

    /// `τ ≤ t`
    pub fn occurred_by(self, t: f64) -> bool {
        matches!(self, DefaultTime::At(s) if s <= t)
    }

    pub fn time(self) -> Option<f64> {
        match self {
            DefaultTime::At(s) => Some(s),
            DefaultTime::Never => None,
        }
    }
}

impl std::fmt::Display for DefaultTime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DefaultTime::At(s) => write!(f, "{s}"),
            DefaultTime::Never => write!(f, "inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefaultScenario {
    pub tau1: DefaultTime,
    pub tau2: DefaultTime,
    pub tau: DefaultTime,
    /// Both names default at the same instant through the common shock.
    pub simultaneous: bool,
    /// Index of the hazard path this scenario was inverted against.
    pub path: usize,
}

pub fn default_times(hazards: &HazardView<'_>, z: &BveSample) -> DefaultScenario {
    let tau1 = hazards.first_crossing(hazards.big1, z.z1);
    let (tau2, simultaneous) = if z.simultaneous && hazards.big1 == hazards.big2 {
        (tau1, tau1.time().is_some())
    } else {
        (hazards.first_crossing(hazards.big2, z.z2), false)
    };
    DefaultScenario {
        tau1,
        tau2,
        tau: tau1.min(tau2),
        simultaneous,
        path: 0,
    }
}

pub fn survival_g(model: &IntensityModel, hazards: &HazardView<'_>, t: f64) -> Result<f64> {
    let (b1, b2) = hazards.cumulative_at(t)?;
    Ok(model.survival_from_cumulative(b1, b2))
}

fn guarded_g(model: &IntensityModel, hazards: &HazardView<'_>, t: f64) -> Result<f64> {
    let g = survival_g(model, hazards, t)?;
    if g <= 0.0 {
        return Err(Error::Numeric(format!("survival G underflowed to 0 at t = {t}")));
    }
    Ok(g)
}

/// Compensator intensity `(λ¹ + λ²) / G` at `t`.
pub fn hazard_lambda(model: &IntensityModel, hazards: &HazardView<'_>, t: f64) -> Result<f64> {
    let g = guarded_g(model, hazards, t)?;
    let (l1, l2) = hazards.rates_at(t)?;
    Ok((l1 + l2) / g)
}

/// Time derivative of `1 / G`, taken as `K / G`.
pub fn d_inv_g(model: &IntensityModel, hazards: &HazardView<'_>, t: f64) -> Result<f64> {
    let g = guarded_g(model, hazards, t)?;
    let (l1, l2) = hazards.rates_at(t)?;
    let (b1, b2) = hazards.cumulative_at(t)?;
    Ok(model.credit_point(l1, l2, b1, b2).k / g)
}

/// Default scenarios together with the hazard paths they were drawn on.
#[derive(Debug, Clone)]
pub struct ScenarioSet {
    pub hazards: Vec<HazardPaths>,
    pub scenarios: Vec<DefaultScenario>,
}

impl ScenarioSet {
    /// Scenarios on one shared deterministic hazard path.
    pub fn shared(hazards: HazardPaths, samples: &[BveSample]) -> Result<Self> {
        let view = hazards.view()?;
        let scenarios = samples.iter().map(|z| default_times(&view, z)).collect();
        Ok(ScenarioSet {
            hazards: vec![hazards],
            scenarios,
        })
    }
}

/// Candidate compensator intensities compared by the diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Candidate {
    /// `(λ¹ + λ²) / G`
    Compensator,
    /// `λ¹ + λ² + ᾱ λ^argmax`, the hazard rate of `-ln G`
    Reference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompensatorRow {
    pub candidate: Candidate,
    pub t: f64,
    pub emp_jump: f64,
    pub emp_integral: f64,
    pub drift: f64,
    pub stderr: f64,
}

impl CompensatorRow {
    pub fn z_score(&self) -> f64 {
        if self.drift == 0.0 {
            0.0
        } else {
            self.drift.abs() / self.stderr
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompensatorReport {
    pub n_scenarios: usize,
    pub rows: Vec<CompensatorRow>,
}

impl CompensatorReport {
    pub fn rows_for(&self, c: Candidate) -> impl Iterator<Item = &CompensatorRow> {
        self.rows.iter().filter(move |r| r.candidate == c)
    }

    pub fn max_z(&self, c: Candidate) -> f64 {
        self.rows_for(c).map(|r| r.z_score()).fold(0.0, f64::max)
    }
}

/// Monte-Carlo estimate of `E[1{τ≤t}] - E[∫₀^{t∧τ} λ ds]` at each grid time,
/// for both candidate intensities.
pub fn compensator_diagnostic(
    model: &IntensityModel,
    set: &ScenarioSet,
    grid: &[f64],
) -> Result<CompensatorReport> {
    if set.scenarios.is_empty() {
        return Err(Error::Usage("compensator diagnostic needs at least one scenario".into()));
    }
    let views = set
        .hazards
        .iter()
        .map(|h| h.view())
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(2 * grid.len());
    for candidate in [Candidate::Compensator, Candidate::Reference] {
        for &t in grid {
            let mut jump = Moments::default();
            let mut integral = Moments::default();
            let mut diff = Moments::default();
            for sc in &set.scenarios {
                let view = &views[sc.path];
                let stop = match sc.tau {
                    DefaultTime::At(s) if s < t => s,
                    _ => t,
                };
                let j = if sc.tau.occurred_by(t) { 1.0 } else { 0.0 };
                let i = match candidate {
                    Candidate::Compensator => view.compensator_integral(model, stop)?,
                    Candidate::Reference => {
                        let (b1, b2) = view.cumulative_at(stop)?;
                        b1 + b2 + model.alpha_bar * b1.max(b2)
                    }
                };
                jump.push(j);
                integral.push(i);
                diff.push(j - i);
            }
            let d = diff.estimate();
            rows.push(CompensatorRow {
                candidate,
                t,
                emp_jump: jump.estimate().mean,
                emp_integral: integral.estimate().mean,
                drift: jump.estimate().mean - integral.estimate().mean,
                stderr: d.stderr,
            });
        }
    }
    Ok(CompensatorReport {
        n_scenarios: set.scenarios.len(),
        rows,
    })
}
