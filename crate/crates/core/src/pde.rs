//! Finite-difference solver for the pricing PDE
//!
//! ```text
//! u_t + ½ σ² u_xx + r x u_x + a u_I - B(t, x, I, u, σ u_x, m) = 0,   u(T) = Φ
//! ```
//!
//! where `B` is the drift of `dV`. The baseline driver has no `I` dependence
//! and is solved on the `x` axis alone. The new driver is solved on `(x, I)`:
//! the accumulator moves with `a = D J`, frozen at the previous Picard
//! iterate, and `m = I + w` where `w` solves the linear companion equation
//! `w_t + L w + a (w_I + 1) = 0`, `w(T) = D_T Φ`, in the same backward loop.
//!
//! Time stepping is a θ-scheme with Rannacher start-up. The reaction part
//! (I-advection and `B`) is θ-weighted and resolved by fixed-point iteration
//! within each step. Both `x` boundaries impose `u_xx = 0`.

use std::io::Write;
use std::path::Path;

use ndarray::{Array2, Array3, ArrayView2};
use serde::Serialize;

use crate::bsde::{credit_snapshot, drift_bfp, drift_new, running_j, DriftKind, PicardSettings};
use crate::cashflows::ContractTerms;
use crate::cox::{HazardPaths, IntensityModel};
use crate::error::{Error, Result};
use crate::paths::{simulate_paths, MarketModel, TimeGrid};
use crate::rng::{substream, STREAM_PDE_PILOT};
use crate::stats::quantile;

/// Sub-steps per unit time used to tabulate the deterministic credit curve.
const CURVE_RESOLUTION: usize = 8192;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PdeGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub n_x: usize,
    pub n_t: usize,
    /// 0 explicit, 1 implicit, 0.5 Crank–Nicolson.
    pub theta: f64,
    /// Replace the first step by two implicit half steps.
    pub rannacher: bool,
    /// Accumulator nodes (new driver only).
    pub n_i: usize,
    /// Fixed accumulator bounds; `None` chooses them from pilot paths.
    pub i_bounds: Option<(f64, f64)>,
    pub fp_tol: f64,
    pub fp_max_iter: usize,
    pub picard: PicardSettings,
    pub pilot_paths: usize,
    pub pilot_steps: usize,
    pub seed: u64,
    /// Solve the baseline driver on every accumulator slice as well.
    pub baseline_on_i_axis: bool,
}

impl PdeGrid {
    pub fn new(x_min: f64, x_max: f64, n_x: usize, n_t: usize) -> Self {
        PdeGrid {
            x_min,
            x_max,
            n_x,
            n_t,
            theta: 0.5,
            rannacher: true,
            n_i: 50,
            i_bounds: None,
            fp_tol: 1e-10,
            fp_max_iter: 100,
            picard: PicardSettings::default(),
            pilot_paths: 4096,
            pilot_steps: 50,
            seed: 0,
            baseline_on_i_axis: false,
        }
    }

    /// Checks the grid against the spot and the dimension of the solve.
    pub fn check(&self, s0: f64, two_d: bool) -> Result<()> {
        if !(self.x_min < s0 && s0 < self.x_max) {
            return Err(Error::Usage(format!(
                "x range [{}, {}] must contain s0 = {s0} strictly",
                self.x_min, self.x_max
            )));
        }
        if self.n_x < 5 {
            return Err(Error::Usage(format!("n_x must be at least 5, got {}", self.n_x)));
        }
        if self.n_t == 0 {
            return Err(Error::Usage("n_t must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::Usage(format!("theta must lie in [0, 1], got {}", self.theta)));
        }
        if two_d && self.n_i < 2 {
            return Err(Error::Usage(format!("n_i must be at least 2, got {}", self.n_i)));
        }
        if let Some((lo, hi)) = self.i_bounds {
            if !(lo <= 0.0 && 0.0 <= hi && lo < hi) {
                return Err(Error::Usage(format!(
                    "accumulator bounds [{lo}, {hi}] must contain 0"
                )));
            }
        }
        Ok(())
    }
}

/// `u` and `∂u/∂x` on the `(t, I, x)` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSurface {
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    pub i_axis: Vec<f64>,
    /// Indexed `[time, I, x]`.
    pub u: Array3<f64>,
    pub du_dx: Array3<f64>,
}

fn lagrange4(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    let k = xs.partition_point(|&s| s <= x).clamp(2, n - 2);
    let lo = k - 2;
    let mut total = 0.0;
    for a in lo..lo + 4 {
        let mut w = 1.0;
        for b in lo..lo + 4 {
            if a != b {
                w *= (x - xs[b]) / (xs[a] - xs[b]);
            }
        }
        total += w * ys[a];
    }
    total
}

/// Linear interpolation weights of `v` on an increasing axis, extrapolating
/// linearly beyond the ends.
fn bracket(axis: &[f64], v: f64) -> (usize, f64) {
    if axis.len() == 1 {
        return (0, 0.0);
    }
    let k = axis.partition_point(|&s| s <= v).clamp(1, axis.len() - 1) - 1;
    (k, (v - axis[k]) / (axis[k + 1] - axis[k]))
}

fn lerp_i(axis: &[f64], values: impl Fn(usize) -> f64, i: f64) -> f64 {
    let (k, w) = bracket(axis, i);
    if axis.len() == 1 {
        values(0)
    } else {
        (1.0 - w) * values(k) + w * values(k + 1)
    }
}

impl ValueSurface {
    fn check_hull(&self, t: f64, x: f64) -> Result<()> {
        let t_end = self.times[self.times.len() - 1];
        let x_end = self.x[self.x.len() - 1];
        if !(0.0..=t_end).contains(&t) || !(self.x[0]..=x_end).contains(&x) {
            return Err(Error::Domain(format!(
                "({t}, {x}) outside the grid [0, {t_end}] × [{}, {x_end}]",
                self.x[0]
            )));
        }
        Ok(())
    }

    /// `u(t_n, x, I)`: four-point Lagrange in `x`, linear in `I`.
    pub fn value_at_level(&self, n: usize, x: f64, i: f64) -> f64 {
        let level = self.u.index_axis(ndarray::Axis(0), n);
        lerp_i(
            &self.i_axis,
            |j| lagrange4(&self.x, level.row(j).as_slice().expect("row-major"), x),
            i,
        )
    }

    /// Bilinear interpolation in `(t, x)` of a field at accumulator `i`.
    fn bilinear(&self, field: &Array3<f64>, t: f64, x: f64, i: f64) -> f64 {
        let (n, wt) = bracket(&self.times, t);
        let (k, wx) = bracket(&self.x, x);
        let at = |n: usize| {
            let level = field.index_axis(ndarray::Axis(0), n);
            lerp_i(
                &self.i_axis,
                |j| (1.0 - wx) * level[[j, k]] + wx * level[[j, k + 1]],
                i,
            )
        };
        (1.0 - wt) * at(n) + wt * at(n + 1)
    }

    pub fn value(&self, t: f64, x: f64, i: f64) -> Result<f64> {
        self.check_hull(t, x)?;
        Ok(self.bilinear(&self.u, t, x, i))
    }

    pub fn gradient(&self, t: f64, x: f64, i: f64) -> Result<f64> {
        self.check_hull(t, x)?;
        Ok(self.bilinear(&self.du_dx, t, x, i))
    }

    /// CSV `t,x,I,u`, keeping every `stride`-th time level and the last.
    pub fn write_csv(&self, path: &Path, stride: usize) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "t,x,I,u").map_err(io)?;
        let last = self.times.len() - 1;
        for (n, t) in self.times.iter().enumerate() {
            if n % stride.max(1) != 0 && n != last {
                continue;
            }
            for (j, i) in self.i_axis.iter().enumerate() {
                for (k, x) in self.x.iter().enumerate() {
                    writeln!(w, "{t},{x},{i},{}", self.u[[n, j, k]]).map_err(io)?;
                }
            }
        }
        w.flush().map_err(io)
    }
}

/// `Z = σ(x, t) ∂u/∂x` at accumulator 0.
pub fn z_from_surface(surface: &ValueSurface, market: &MarketModel, t: f64, x: f64) -> Result<f64> {
    Ok(surface.gradient(t, x, 0.0)? * market.sigma.eval(x, t))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridReport {
    pub x_min: f64,
    pub x_max: f64,
    pub n_x: usize,
    pub n_t: usize,
    pub n_i: usize,
    pub theta: f64,
    pub rannacher: bool,
    pub i_bounds: (f64, f64),
    /// `Δt σ²/Δx²` maximised over the grid.
    pub cfl: f64,
    pub max_fixed_point_iters: usize,
    pub picard_trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PdeSolution {
    pub surface: ValueSurface,
    pub v0: f64,
    pub picard_iters: usize,
    pub grid_report: GridReport,
}

/// `Λ¹, Λ²` and `e^{∫(r+λ)}` as functions of time for state-free intensities.
struct CreditCurve {
    hazards: HazardPaths,
    r_integral: Box<dyn Fn(f64) -> f64 + Sync>,
}

impl CreditCurve {
    fn new(intensity: &IntensityModel, market: &MarketModel, horizon: f64) -> Result<Self> {
        let steps = ((horizon * CURVE_RESOLUTION as f64).ceil() as usize).max(64);
        let grid = TimeGrid::uniform(horizon, steps)?;
        let r = market.r.clone();
        Ok(CreditCurve {
            hazards: HazardPaths::deterministic(intensity, grid.times(), market.s0),
            r_integral: Box::new(move |t| r.integral(0.0, t)),
        })
    }

    fn at(&self, intensity: &IntensityModel, t: f64) -> Result<(f64, f64, f64)> {
        let view = self.hazards.view()?;
        let t = t.min(view.horizon());
        let (b1, b2) = view.cumulative_at(t)?;
        let growth = ((self.r_integral)(t) + view.compensator_integral(intensity, t)?).exp();
        Ok((b1, b2, growth))
    }
}

/// Per-time-level quantities shared by all nodes.
#[derive(Clone, Copy)]
struct Level {
    t: f64,
    r: f64,
    big1: f64,
    big2: f64,
    growth: f64,
}

struct Ctx<'a> {
    market: &'a MarketModel,
    terms: &'a ContractTerms,
    intensity: &'a IntensityModel,
    kind: DriftKind,
    x: Vec<f64>,
    h: f64,
    curve: Option<CreditCurve>,
    fp_tol: f64,
    fp_max_iter: usize,
}

impl Ctx<'_> {
    fn level(&self, t: f64) -> Result<Level> {
        let (big1, big2, growth) = match &self.curve {
            Some(c) => c.at(self.intensity, t)?,
            None => (0.0, 0.0, 1.0),
        };
        Ok(Level {
            t,
            r: self.market.r.eval(t),
            big1,
            big2,
            growth,
        })
    }

    /// Diffusion and convection weights `(½σ²/h², r x/2h)` at each node.
    fn weights(&self, lv: &Level) -> (Vec<f64>, Vec<f64>) {
        let h2 = self.h * self.h;
        self.x
            .iter()
            .map(|&x| {
                let s = self.market.sigma.eval(x, lv.t);
                (0.5 * s * s / h2, lv.r * x / (2.0 * self.h))
            })
            .unzip()
    }

    fn apply_l(&self, lv: &Level, u: ArrayView2<f64>) -> Array2<f64> {
        let (al, be) = self.weights(lv);
        let n = self.x.len();
        let mut out = Array2::<f64>::zeros(u.raw_dim());
        for (j, row) in u.outer_iter().enumerate() {
            for i in 1..n - 1 {
                out[[j, i]] = al[i] * (row[i + 1] - 2.0 * row[i] + row[i - 1])
                    + be[i] * (row[i + 1] - row[i - 1]);
            }
        }
        out
    }

    /// Solves `(1 + diag - c L) u = rhs` on one slice, with `u_xx = 0` at both ends.
    fn solve_row(&self, al: &[f64], be: &[f64], c: f64, diag: &[f64], rhs: &[f64]) -> Vec<f64> {
        let n = self.x.len();
        let m = n - 2;
        let mut lo = vec![0.0; m];
        let mut di = vec![0.0; m];
        let mut up = vec![0.0; m];
        for r in 0..m {
            let i = r + 1;
            lo[r] = -c * (al[i] - be[i]);
            di[r] = 1.0 + diag[i] + 2.0 * c * al[i];
            up[r] = -c * (al[i] + be[i]);
        }
        // u_0 = 2u_1 - u_2 and u_{n-1} = 2u_{n-2} - u_{n-3}
        di[0] += 2.0 * lo[0];
        up[0] -= lo[0];
        di[m - 1] += 2.0 * up[m - 1];
        lo[m - 1] -= up[m - 1];
        let mut cp = vec![0.0; m];
        let mut d = vec![0.0; m];
        let mut den = di[0];
        cp[0] = up[0] / den;
        d[0] = rhs[1] / den;
        for r in 1..m {
            den = di[r] - lo[r] * cp[r - 1];
            cp[r] = up[r] / den;
            d[r] = (rhs[r + 1] - lo[r] * d[r - 1]) / den;
        }
        for r in (0..m - 1).rev() {
            d[r] -= cp[r] * d[r + 1];
        }
        let mut out = vec![0.0; n];
        out[1..n - 1].copy_from_slice(&d);
        out[0] = 2.0 * out[1] - out[2];
        out[n - 1] = 2.0 * out[n - 2] - out[n - 3];
        out
    }

    fn du_dx(&self, u: ArrayView2<f64>) -> Array2<f64> {
        let n = self.x.len();
        let h = self.h;
        let mut out = Array2::<f64>::zeros(u.raw_dim());
        for (j, row) in u.outer_iter().enumerate() {
            out[[j, 0]] = (-3.0 * row[0] + 4.0 * row[1] - row[2]) / (2.0 * h);
            for i in 1..n - 1 {
                out[[j, i]] = (row[i + 1] - row[i - 1]) / (2.0 * h);
            }
            out[[j, n - 1]] = (3.0 * row[n - 1] - 4.0 * row[n - 2] + row[n - 3]) / (2.0 * h);
        }
        out
    }

    /// One θ-step from `t_hi` back to `t_lo`. `reaction(level, u, j)` returns
    /// `(rest, diag)` on slice `j` such that `u_t + L u + rest - diag u = 0`.
    /// Slices are swept Gauss-Seidel style, alternating direction per pass.
    fn theta_step(
        &self,
        hi: &Level,
        lo: &Level,
        theta: f64,
        u_hi: &Array2<f64>,
        reaction: &Reaction<'_>,
    ) -> Result<(Array2<f64>, usize)> {
        let dt = hi.t - lo.t;
        let (n_i, n_x) = u_hi.dim();
        let mut rhs_fixed = u_hi.clone();
        if theta < 1.0 {
            let lu = self.apply_l(hi, u_hi.view());
            rhs_fixed.scaled_add((1.0 - theta) * dt, &lu);
            for j in 0..n_i {
                let (rest, diag) = reaction(hi, u_hi, j)?;
                for k in 0..n_x {
                    rhs_fixed[[j, k]] += (1.0 - theta) * dt * (rest[k] - diag[k] * u_hi[[j, k]]);
                }
            }
        }
        let c = theta * dt;
        let (al, be) = self.weights(lo);
        let mut guess = u_hi.clone();
        let mut trace = Vec::new();
        let mut rhs = vec![0.0; n_x];
        let mut extra = vec![0.0; n_x];
        for iter in 1..=self.fp_max_iter {
            let mut change: f64 = 0.0;
            for step in 0..n_i {
                let j = if iter % 2 == 1 { n_i - 1 - step } else { step };
                if theta > 0.0 {
                    let (rest, diag) = reaction(lo, &guess, j)?;
                    for k in 0..n_x {
                        rhs[k] = rhs_fixed[[j, k]] + c * rest[k];
                        extra[k] = c * diag[k];
                    }
                } else {
                    rhs.iter_mut().zip(rhs_fixed.row(j)).for_each(|(a, &b)| *a = b);
                }
                let next = self.solve_row(&al, &be, c, &extra, &rhs);
                for k in 0..n_x {
                    change = change.max((next[k] - guess[[j, k]]).abs());
                    guess[[j, k]] = next[k];
                }
            }
            trace.push(change);
            if !change.is_finite() {
                break;
            }
            if change < self.fp_tol || theta == 0.0 {
                return Ok((guess, iter));
            }
        }
        Err(Error::NonConvergence {
            solver: "pde fixed point",
            iterations: trace.len(),
            trace,
        })
    }
}

type Reaction<'a> = dyn Fn(&Level, &Array2<f64>, usize) -> Result<(Vec<f64>, Vec<f64>)> + 'a;

/// Upwind split of `a ∂u/∂I` at node `(j, i)` into `(rest, diag)` with
/// `a ∂u/∂I = rest - diag u[j, i]`. On the inflow edge the slope of the
/// previous level is used explicitly.
fn upwind(u: &Array2<f64>, u_hi: &Array2<f64>, axis: &[f64], j: usize, i: usize, a: f64) -> (f64, f64) {
    let n = axis.len();
    if n == 1 || a == 0.0 {
        return (0.0, 0.0);
    }
    if a > 0.0 {
        if j + 1 < n {
            let d = a / (axis[j + 1] - axis[j]);
            (d * u[[j + 1, i]], d)
        } else {
            (a * (u_hi[[j, i]] - u_hi[[j - 1, i]]) / (axis[j] - axis[j - 1]), 0.0)
        }
    } else if j > 0 {
        let d = -a / (axis[j] - axis[j - 1]);
        (d * u[[j - 1, i]], d)
    } else {
        (a * (u_hi[[1, i]] - u_hi[[0, i]]) / (axis[1] - axis[0]), 0.0)
    }
}

fn uniform_axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.0];
    }
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

/// Stored running cash flow `J` on `(level, I, x)`, used as the frozen
/// advection field of the next Picard iteration.
struct JField {
    times: Vec<f64>,
    axis: Vec<f64>,
    values: Array3<f64>,
}

impl JField {
    fn zero(times: &[f64], axis: &[f64], n_x: usize) -> Self {
        JField {
            times: times.to_vec(),
            axis: axis.to_vec(),
            values: Array3::zeros((times.len(), axis.len(), n_x)),
        }
    }

    /// `J(t)` on the nodes, linear in time between stored levels.
    fn at(&self, t: f64) -> Array2<f64> {
        let (n, w) = bracket(&self.times, t);
        let a = self.values.index_axis(ndarray::Axis(0), n);
        let b = self.values.index_axis(ndarray::Axis(0), n + 1);
        &a * (1.0 - w) + &b * w
    }

    /// Same field on another accumulator axis, linear in `I`.
    fn regrid(&self, axis: &[f64]) -> Self {
        let (levels, _, n_x) = self.values.dim();
        let mut values = Array3::zeros((levels, axis.len(), n_x));
        for (j, &i) in axis.iter().enumerate() {
            let (k, w) = bracket(&self.axis, i);
            for n in 0..levels {
                for x in 0..n_x {
                    values[[n, j, x]] = if self.axis.len() == 1 {
                        self.values[[n, 0, x]]
                    } else {
                        (1.0 - w) * self.values[[n, k, x]] + w * self.values[[n, k + 1, x]]
                    };
                }
            }
        }
        JField {
            times: self.times.clone(),
            axis: axis.to_vec(),
            values,
        }
    }

    /// `J(t, x, I)`, bilinear off-node in `(x, I)` with `x` clamped to the grid.
    fn sample(&self, n: usize, xs: &[f64], x: f64, i: f64) -> f64 {
        let x = x.clamp(xs[0], xs[xs.len() - 1]);
        let (k, wx) = bracket(xs, x);
        let level = self.values.index_axis(ndarray::Axis(0), n);
        lerp_i(
            &self.axis,
            |j| (1.0 - wx) * level[[j, k]] + wx * level[[j, k + 1]],
            i,
        )
    }
}

struct SweepOut {
    surface: ValueSurface,
    j_new: JField,
    max_fp: usize,
}

fn sweep(ctx: &Ctx<'_>, grid: &PdeGrid, times: &[f64], axis: &[f64], j_old: &JField) -> Result<SweepOut> {
    let n_i = axis.len();
    let n_x = ctx.x.len();
    let n_t = times.len() - 1;
    let new = ctx.kind == DriftKind::NewBve;
    let phi: Vec<f64> = ctx.x.iter().map(|&x| ctx.market.phi.eval(x)).collect();

    let mut u_levels = Array3::<f64>::zeros((n_t + 1, n_i, n_x));
    let mut g_levels = Array3::<f64>::zeros((n_t + 1, n_i, n_x));
    let mut j_levels = Array3::<f64>::zeros((n_t + 1, n_i, n_x));

    let terminal = ctx.level(times[n_t])?;
    let mut u = Array2::from_shape_fn((n_i, n_x), |(_, k)| phi[k]);
    let mut w = Array2::from_shape_fn((n_i, n_x), |(_, k)| phi[k] / terminal.growth);

    // J on the freshly computed level `n`
    let record = |n: usize,
                  lv: &Level,
                  u: &Array2<f64>,
                  du: &Array2<f64>,
                  j_levels: &mut Array3<f64>| {
        for j in 0..n_i {
            for k in 0..n_x {
                let mut snap = credit_snapshot(
                    DriftKind::NewBve,
                    ctx.intensity,
                    lv.t,
                    ctx.x[k],
                    lv.big1,
                    lv.big2,
                    lv.growth,
                );
                snap.v = u[[j, k]];
                snap.z = ctx.market.sigma.eval(ctx.x[k], lv.t) * du[[j, k]];
                j_levels[[n, j, k]] = running_j(ctx.terms, ctx.market, &snap);
            }
        }
    };

    let du = ctx.du_dx(u.view());
    u_levels.index_axis_mut(ndarray::Axis(0), n_t).assign(&u);
    g_levels.index_axis_mut(ndarray::Axis(0), n_t).assign(&du);
    if new {
        record(n_t, &terminal, &u, &du, &mut j_levels);
    }

    let advection = |lv: &Level| -> Array2<f64> {
        if new {
            j_old.at(lv.t) / lv.growth
        } else {
            Array2::zeros((n_i, n_x))
        }
    };
    let mut max_fp = 0;
    for n in (0..n_t).rev() {
        let mut stages = Vec::new();
        if grid.rannacher && n == n_t - 1 {
            let mid = 0.5 * (times[n] + times[n + 1]);
            stages.push((times[n + 1], mid, 1.0));
            stages.push((mid, times[n], 1.0));
        } else {
            stages.push((times[n + 1], times[n], grid.theta));
        }
        for (t_hi, t_lo, theta) in stages {
            let hi = ctx.level(t_hi)?;
            let lo = ctx.level(t_lo)?;
            let (a_hi, a_lo) = (advection(&hi), advection(&lo));
            let w_hi = w.clone();
            if new {
                let w_reaction = |lv: &Level, f: &Array2<f64>, j: usize| -> Result<(Vec<f64>, Vec<f64>)> {
                    let a = if lv.t == t_hi { &a_hi } else { &a_lo };
                    Ok((0..n_x)
                        .map(|k| {
                            let ak = a[[j, k]];
                            let (rest, diag) = upwind(f, &w_hi, axis, j, k, ak);
                            (rest + ak, diag)
                        })
                        .unzip())
                };
                let (next, it) = ctx.theta_step(&hi, &lo, theta, &w_hi, &w_reaction)?;
                w = next;
                max_fp = max_fp.max(it);
            }
            let w_lo = &w;
            let u_hi = &u;
            let u_reaction = |lv: &Level, f: &Array2<f64>, j: usize| -> Result<(Vec<f64>, Vec<f64>)> {
                let at_hi = lv.t == t_hi;
                let a = if at_hi { &a_hi } else { &a_lo };
                let wv = if at_hi { &w_hi } else { w_lo };
                let grad = ctx.du_dx(f.slice(ndarray::s![j..j + 1, ..]));
                let mut rest = vec![0.0; n_x];
                let mut diag = vec![0.0; n_x];
                for k in 0..n_x {
                    let mut snap = credit_snapshot(
                        ctx.kind,
                        ctx.intensity,
                        lv.t,
                        ctx.x[k],
                        lv.big1,
                        lv.big2,
                        lv.growth,
                    );
                    snap.v = f[[j, k]];
                    snap.z = ctx.market.sigma.eval(ctx.x[k], lv.t) * grad[[0, k]];
                    let b = match ctx.kind {
                        DriftKind::NewBve => drift_new(
                            ctx.terms,
                            ctx.market,
                            &snap,
                            axis[j],
                            axis[j] + wv[[j, k]],
                        )?,
                        DriftKind::BfpBaseline => drift_bfp(ctx.terms, ctx.market, &snap),
                    };
                    let (r, d) = upwind(f, u_hi, axis, j, k, a[[j, k]]);
                    rest[k] = r - b;
                    diag[k] = d;
                }
                Ok((rest, diag))
            };
            let (next, it) = ctx.theta_step(&hi, &lo, theta, &u, &u_reaction)?;
            u = next;
            max_fp = max_fp.max(it);
        }
        let lv = ctx.level(times[n])?;
        let du = ctx.du_dx(u.view());
        u_levels.index_axis_mut(ndarray::Axis(0), n).assign(&u);
        g_levels.index_axis_mut(ndarray::Axis(0), n).assign(&du);
        if new {
            record(n, &lv, &u, &du, &mut j_levels);
        }
    }
    Ok(SweepOut {
        surface: ValueSurface {
            times: times.to_vec(),
            x: ctx.x.clone(),
            i_axis: axis.to_vec(),
            u: u_levels,
            du_dx: g_levels,
        },
        j_new: JField {
            times: times.to_vec(),
            axis: axis.to_vec(),
            values: j_levels,
        },
        max_fp,
    })
}

/// Accumulator range visited by pilot paths driven by the frozen `J`:
/// the 0.1% and 99.9% quantiles over all times, padded by 10% and widened
/// to contain 0.
fn pilot_bounds(ctx: &Ctx<'_>, grid: &PdeGrid, horizon: f64, j: &JField) -> Result<(f64, f64)> {
    let pilot_grid = TimeGrid::uniform(horizon, grid.pilot_steps.max(1))?;
    let bundle = simulate_paths(
        ctx.market,
        ctx.intensity,
        &pilot_grid,
        grid.pilot_paths.max(16),
        substream(grid.seed, STREAM_PDE_PILOT),
    )?;
    let t = pilot_grid.times();
    let growth: Vec<f64> = t
        .iter()
        .map(|&tk| ctx.level(tk).map(|lv| lv.growth))
        .collect::<Result<_>>()?;
    let mut seen = Vec::with_capacity(bundle.n_paths() * t.len());
    for p in 0..bundle.n_paths() {
        let mut i = 0.0;
        seen.push(i);
        for k in 0..t.len() - 1 {
            let (n, w) = bracket(&j.times, t[k]);
            let jv = (1.0 - w) * j.sample(n, &ctx.x, bundle.s[[p, k]], i)
                + w * j.sample(n + 1, &ctx.x, bundle.s[[p, k]], i);
            i += jv / growth[k] * pilot_grid.dt(k);
            seen.push(i);
        }
    }
    seen.sort_by(f64::total_cmp);
    let lo = quantile(&seen, 0.001).min(0.0);
    let hi = quantile(&seen, 0.999).max(0.0);
    let pad = (0.1 * (hi - lo)).max(1e-6);
    Ok((lo - pad, hi + pad))
}

/// Solves the pricing PDE for `drift`. The new driver needs intensities that
/// depend on time only, so that the survival process is deterministic.
pub fn solve_pde(
    market: &MarketModel,
    terms: &ContractTerms,
    intensity: &IntensityModel,
    drift: DriftKind,
    grid: &PdeGrid,
) -> Result<PdeSolution> {
    let new = drift == DriftKind::NewBve;
    grid.check(market.s0, new)?;
    if new && !intensity.is_state_free() {
        return Err(Error::Model(
            "the (x, I) PDE needs intensities that depend on time only".into(),
        ));
    }
    let horizon = terms.maturity;
    let x = uniform_axis(grid.x_min, grid.x_max, grid.n_x);
    let h = x[1] - x[0];
    let ctx = Ctx {
        market,
        terms,
        intensity,
        kind: drift,
        h,
        curve: if new {
            Some(CreditCurve::new(intensity, market, horizon)?)
        } else {
            None
        },
        x,
        fp_tol: grid.fp_tol,
        fp_max_iter: grid.fp_max_iter,
    };
    let times: Vec<f64> = (0..=grid.n_t)
        .map(|n| horizon * n as f64 / grid.n_t as f64)
        .collect();
    let dt = horizon / grid.n_t as f64;
    let cfl = ctx
        .x
        .iter()
        .flat_map(|&x| times.iter().map(move |&t| (x, t)))
        .map(|(x, t)| {
            let s = market.sigma.eval(x, t);
            dt * s * s / (h * h)
        })
        .fold(0.0, f64::max);
    if grid.theta < 0.5 && (1.0 - 2.0 * grid.theta) * cfl > 1.0 {
        return Err(Error::Usage(format!(
            "CFL condition violated: (1 - 2θ) Δt σ²/Δx² = {} > 1",
            (1.0 - 2.0 * grid.theta) * cfl
        )));
    }

    let report = |axis: &[f64], max_fp: usize, trace: Vec<f64>| GridReport {
        x_min: grid.x_min,
        x_max: grid.x_max,
        n_x: grid.n_x,
        n_t: grid.n_t,
        n_i: axis.len(),
        theta: grid.theta,
        rannacher: grid.rannacher,
        i_bounds: (axis[0], axis[axis.len() - 1]),
        cfl,
        max_fixed_point_iters: max_fp,
        picard_trace: trace,
    };

    if !new {
        let axis = match (grid.baseline_on_i_axis, grid.i_bounds) {
            (true, Some((lo, hi))) => uniform_axis(lo, hi, grid.n_i),
            (true, None) => uniform_axis(-1.0, 1.0, grid.n_i),
            (false, _) => vec![0.0],
        };
        let j0 = JField::zero(&times, &axis, ctx.x.len());
        let out = sweep(&ctx, grid, &times, &axis, &j0)?;
        let v0 = out.surface.value_at_level(0, market.s0, 0.0);
        let grid_report = report(&axis, out.max_fp, vec![v0]);
        return Ok(PdeSolution {
            surface: out.surface,
            v0,
            picard_iters: 1,
            grid_report,
        });
    }

    let mut axis = match grid.i_bounds {
        Some((lo, hi)) => uniform_axis(lo, hi, grid.n_i),
        None => uniform_axis(-1.0, 1.0, grid.n_i),
    };
    let mut j = JField::zero(&times, &axis, ctx.x.len());
    let mut trace: Vec<f64> = Vec::new();
    let mut max_fp = 0;
    for iter in 1..=grid.picard.max_iter {
        let out = sweep(&ctx, grid, &times, &axis, &j)?;
        max_fp = max_fp.max(out.max_fp);
        let v0 = out.surface.value_at_level(0, market.s0, 0.0);
        let done = trace.last().is_some_and(|&prev| grid.picard.converged(prev, v0));
        trace.push(v0);
        log::debug!("pde picard iteration {iter}: v0 = {v0}, I in [{}, {}]", axis[0], axis[axis.len() - 1]);
        if done {
            let grid_report = report(&axis, max_fp, trace);
            return Ok(PdeSolution {
                surface: out.surface,
                v0,
                picard_iters: iter,
                grid_report,
            });
        }
        if grid.i_bounds.is_none() {
            let (lo, hi) = pilot_bounds(&ctx, grid, horizon, &out.j_new)?;
            axis = uniform_axis(lo, hi, grid.n_i);
            j = out.j_new.regrid(&axis);
        } else {
            j = out.j_new;
        }
    }
    Err(Error::NonConvergence {
        solver: "pde picard",
        iterations: grid.picard.max_iter,
        trace,
    })
}
