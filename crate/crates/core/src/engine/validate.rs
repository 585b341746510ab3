//! Numerical probes of the Lipschitz and growth hypotheses behind the
//! existence of the value process and of its PDE representation.
//!
//! Each quantity is probed on a 200-point grid over the PDE range and again
//! on a grid ten times wider. A constant that more than doubles when the
//! range widens tenfold is reported as a failure: the function is not
//! globally Lipschitz (or not of linear growth). A quadratic grows tenfold
//! under this test; bounded constants converge and stay well inside it.

use serde::Serialize;

use crate::bsde::{credit_snapshot, drift_bfp, DriftKind};
use crate::cox::IntensityModel;
use crate::engine::config::RunConfig;

pub const PROBE_POINTS: usize = 200;
const WIDEN: f64 = 10.0;
const TIME_PROBES: usize = 5;
/// Largest tolerated ratio of the wide to the narrow constant.
const GROWTH_RATIO: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionCheck {
    pub name: &'static str,
    pub description: &'static str,
    /// Empirical constant on the base probe range.
    pub narrow: f64,
    /// Same constant on the widened range.
    pub wide: f64,
    /// Declared bound, where the configuration carries one.
    pub bound: Option<(f64, f64)>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub probe_points: usize,
    pub x_range: (f64, f64),
    pub v_range: (f64, f64),
    pub checks: Vec<AssumptionCheck>,
    pub all_pass: bool,
}

impl AssumptionReport {
    pub fn check(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn nodes(lo: f64, hi: f64) -> impl Iterator<Item = f64> {
    (0..PROBE_POINTS).map(move |k| lo + (hi - lo) * k as f64 / (PROBE_POINTS - 1) as f64)
}

/// Largest slope between neighbouring probe points.
pub fn lipschitz(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let xs: Vec<f64> = nodes(lo, hi).collect();
    xs.windows(2)
        .map(|w| ((f(w[1]) - f(w[0])) / (w[1] - w[0])).abs())
        .fold(0.0, f64::max)
}

/// `max |f(x)| / (1 + |x|)` over the probe.
pub fn growth(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    nodes(lo, hi)
        .map(|x| f(x).abs() / (1.0 + x.abs()))
        .fold(0.0, f64::max)
}

/// `(min f, max f)` over the probe.
pub fn range(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    nodes(lo, hi).map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    })
}

fn widen(lo: f64, hi: f64) -> (f64, f64) {
    let c = 0.5 * (lo + hi);
    let w = 0.5 * (hi - lo) * WIDEN;
    (c - w, c + w)
}

fn stable(narrow: f64, wide: f64) -> bool {
    narrow.is_finite() && wide.is_finite() && wide <= narrow * GROWTH_RATIO + 1e-12
}

struct Probe {
    times: Vec<f64>,
    x: (f64, f64),
    v: (f64, f64),
    checks: Vec<AssumptionCheck>,
}

impl Probe {
    /// Worst case over the time probes of `stat(f(t, ·), lo, hi)`.
    fn over_time(&self, f: &dyn Fn(f64, f64) -> f64, stat: fn(&dyn Fn(f64) -> f64, f64, f64) -> f64, (lo, hi): (f64, f64)) -> f64 {
        self.times
            .iter()
            .map(|&t| stat(&|x| f(t, x), lo, hi))
            .fold(0.0, f64::max)
    }

    fn push_stable(
        &mut self,
        name: &'static str,
        description: &'static str,
        f: &dyn Fn(f64, f64) -> f64,
        stat: fn(&dyn Fn(f64) -> f64, f64, f64) -> f64,
        on_v: bool,
    ) {
        let base = if on_v { self.v } else { self.x };
        let narrow = self.over_time(f, stat, base);
        let wide = self.over_time(f, stat, widen(base.0, base.1));
        self.checks.push(AssumptionCheck {
            name,
            description,
            narrow,
            wide,
            bound: None,
            pass: stable(narrow, wide),
        });
    }
}

fn lip(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    lipschitz(f, lo, hi)
}

fn grow(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    growth(f, lo, hi)
}

fn bounded_check(
    p: &Probe,
    name: &'static str,
    model: &IntensityModel,
    which: usize,
) -> AssumptionCheck {
    let f = |t: f64, x: f64| {
        let (a, b) = model.rates(t, x);
        if which == 1 {
            a
        } else {
            b
        }
    };
    let over = |(lo, hi): (f64, f64)| {
        p.times.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &t| {
            let (c, d) = range(|x| f(t, x), lo, hi);
            (a.min(c), b.max(d))
        })
    };
    let (n_lo, n_hi) = over(p.x);
    let (w_lo, w_hi) = over(widen(p.x.0, p.x.1));
    let (lo, hi) = (model.lambda_min, model.lambda_max);
    AssumptionCheck {
        name,
        description: "intensity bounded within the declared range",
        narrow: n_hi.max(-n_lo),
        wide: w_hi.max(-w_lo),
        bound: Some((lo, hi)),
        pass: lo <= n_lo.min(w_lo) && n_hi.max(w_hi) <= hi,
    }
}

/// Probes every hypothesis on the configured model. Never fails; the
/// verdicts are in the report.
pub fn validate_assumptions(config: &RunConfig) -> AssumptionReport {
    let market = &config.market;
    let terms = &config.contract;
    let intensity = &config.intensity;
    let horizon = terms.maturity;
    let x = (config.pde.x_min, config.pde.x_max);
    let v_scale = range(|s| market.phi.eval(s).abs(), x.0, x.1).1.max(market.s0);
    let times = (0..TIME_PROBES)
        .map(|k| horizon * k as f64 / (TIME_PROBES - 1) as f64)
        .collect();
    let mut p = Probe {
        times,
        x,
        v: (-v_scale, v_scale),
        checks: Vec::new(),
    };

    p.push_stable(
        "drift_lipschitz",
        "forward drift r(t) x Lipschitz in x",
        &|t, s| market.r.eval(t) * s,
        lip,
        false,
    );
    p.push_stable(
        "sigma_lipschitz",
        "volatility Lipschitz in x",
        &|t, s| market.sigma.eval(s, t),
        lip,
        false,
    );
    let sup_sigma = p.over_time(&|t, s| market.sigma.eval(s, t).abs(), |f, lo, hi| range(f, lo, hi).1, x);
    p.checks.push(AssumptionCheck {
        name: "sigma_nonvanishing",
        description: "volatility not identically zero",
        narrow: sup_sigma,
        wide: sup_sigma,
        bound: None,
        pass: !market.sigma.vanishes(),
    });
    let b1 = bounded_check(&p, "lambda1_bounded", intensity, 1);
    let b2 = bounded_check(&p, "lambda2_bounded", intensity, 2);
    p.checks.push(b1);
    p.checks.push(b2);
    p.push_stable(
        "lambda1_lipschitz",
        "counterparty intensity Lipschitz in x",
        &|t, s| intensity.rates(t, s).0,
        lip,
        false,
    );
    p.push_stable(
        "lambda2_lipschitz",
        "investor intensity Lipschitz in x",
        &|t, s| intensity.rates(t, s).1,
        lip,
        false,
    );
    p.push_stable(
        "dividend_lipschitz",
        "dividend rate Lipschitz in x",
        &|t, s| market.pi.eval(t, s),
        lip,
        false,
    );
    let driver = |t: f64, s: f64, v: f64, z: f64| {
        let mut snap = credit_snapshot(DriftKind::BfpBaseline, intensity, t, s, 0.0, 0.0, 1.0);
        snap.v = v;
        snap.z = z;
        drift_bfp(terms, market, &snap)
    };
    p.push_stable(
        "payoff_driver_growth",
        "|payoff| + |driver(t, x, 0, 0)| of linear growth in x",
        &|t, s| market.phi.eval(s).abs() + driver(t, s, 0.0, 0.0).abs(),
        grow,
        false,
    );
    let s0 = market.s0;
    p.push_stable(
        "hedge_lipschitz_v",
        "hedge functional Lipschitz in v",
        &|t, v| terms.hedge.eval(t, s0, v, 0.0),
        lip,
        true,
    );
    p.push_stable(
        "hedge_lipschitz_z",
        "hedge functional Lipschitz in z",
        &|t, z| terms.hedge.eval(t, s0, 0.0, z),
        lip,
        true,
    );
    p.push_stable(
        "driver_lipschitz_v",
        "driver Lipschitz in v",
        &|t, v| driver(t, s0, v, 0.0),
        lip,
        true,
    );
    p.push_stable(
        "driver_lipschitz_z",
        "driver Lipschitz in z",
        &|t, z| driver(t, s0, 0.0, z),
        lip,
        true,
    );
    let all_pass = p.checks.iter().all(|c| c.pass);
    AssumptionReport {
        probe_points: PROBE_POINTS,
        x_range: p.x,
        v_range: p.v,
        checks: p.checks,
        all_pass,
    }
}
