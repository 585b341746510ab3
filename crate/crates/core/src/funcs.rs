//! Registry of named model-function families.
//!
//! Configurations never carry free-form expressions. Each model function is
//! a family name plus numeric parameters, written `name(p1, p2, ...)`; a bare
//! number is shorthand for `constant(x)` where that family exists.

use std::fmt;
use std::str::FromStr;

/// `name(args...)` split into its parts.
fn parse_call(src: &str) -> Result<(String, Vec<f64>), String> {
    let s = src.trim();
    if let Ok(x) = s.parse::<f64>() {
        return Ok(("constant".to_string(), vec![x]));
    }
    let Some(open) = s.find('(') else {
        if s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') && !s.is_empty() {
            return Ok((s.to_string(), Vec::new()));
        }
        return Err(format!("cannot parse function `{src}`"));
    };
    if !s.ends_with(')') {
        return Err(format!("missing `)` in `{src}`"));
    }
    let name = s[..open].trim().to_string();
    let inner = s[open + 1..s.len() - 1].trim();
    let args = if inner.is_empty() {
        Vec::new()
    } else {
        inner
            .split(',')
            .map(|a| {
                a.trim()
                    .parse::<f64>()
                    .map_err(|_| format!("argument `{}` of `{src}` is not a number", a.trim()))
            })
            .collect::<Result<Vec<_>, _>>()?
    };
    if args.iter().any(|a| !a.is_finite()) {
        return Err(format!("non-finite argument in `{src}`"));
    }
    Ok((name, args))
}

fn arity(name: &str, args: &[f64], n: usize) -> Result<(), String> {
    if args.len() == n {
        Ok(())
    } else {
        Err(format!("`{name}` takes {n} argument(s), got {}", args.len()))
    }
}

fn join(args: &[f64]) -> String {
    args.iter()
        .map(|a| format!("{a}"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Piecewise-constant step function in time: `values[0]` on `[0, knots[0])`,
/// `values[i]` on `[knots[i-1], knots[i])`, last value thereafter.
#[derive(Debug, Clone, PartialEq)]
pub struct Steps {
    knots: Vec<f64>,
    values: Vec<f64>,
}

impl Steps {
    fn from_args(args: &[f64]) -> Result<Self, String> {
        if args.len().is_multiple_of(2) {
            return Err("`piecewise` takes v0, t1, v1, t2, v2, ... (odd count)".into());
        }
        let values: Vec<f64> = args.iter().step_by(2).copied().collect();
        let knots: Vec<f64> = args.iter().skip(1).step_by(2).copied().collect();
        if knots.windows(2).any(|w| w[1] <= w[0]) || knots.first().is_some_and(|&k| k <= 0.0) {
            return Err("`piecewise` knots must be positive and strictly increasing".into());
        }
        Ok(Steps { knots, values })
    }

    fn eval(&self, t: f64) -> f64 {
        let i = self.knots.partition_point(|&k| k <= t);
        self.values[i]
    }

    fn integral(&self, a: f64, b: f64) -> f64 {
        if b < a {
            return -self.integral(b, a);
        }
        let mut total = 0.0;
        let mut lo = a;
        for (i, &v) in self.values.iter().enumerate() {
            let hi = self.knots.get(i).copied().unwrap_or(f64::INFINITY).min(b);
            if hi > lo {
                total += v * (hi - lo);
                lo = hi;
            }
            if lo >= b {
                break;
            }
        }
        total
    }

    fn range(&self, t0: f64, t1: f64) -> (f64, f64) {
        let i0 = self.knots.partition_point(|&k| k <= t0);
        let i1 = self.knots.partition_point(|&k| k <= t1);
        let vs = &self.values[i0..=i1];
        (
            vs.iter().copied().fold(f64::INFINITY, f64::min),
            vs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        )
    }

    fn args(&self) -> Vec<f64> {
        let mut out = vec![self.values[0]];
        for (k, v) in self.knots.iter().zip(&self.values[1..]) {
            out.push(*k);
            out.push(*v);
        }
        out
    }
}

/// Deterministic function of time (rates, collateral fraction).
#[derive(Debug, Clone, PartialEq)]
pub enum TimeFn {
    Constant(f64),
    /// `a + b t`
    Affine { a: f64, b: f64 },
    Piecewise(Steps),
}

impl TimeFn {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeFn::Constant(c) => *c,
            TimeFn::Affine { a, b } => a + b * t,
            TimeFn::Piecewise(s) => s.eval(t),
        }
    }

    /// Exact integral over `[a, b]`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        match self {
            TimeFn::Constant(c) => c * (b - a),
            TimeFn::Affine { a: a0, b: b1 } => a0 * (b - a) + 0.5 * b1 * (b * b - a * a),
            TimeFn::Piecewise(s) => s.integral(a, b),
        }
    }

    /// Exact `(min, max)` over `[t0, t1]`.
    pub fn range(&self, t0: f64, t1: f64) -> (f64, f64) {
        match self {
            TimeFn::Constant(c) => (*c, *c),
            TimeFn::Affine { .. } => {
                let (x, y) = (self.eval(t0), self.eval(t1));
                (x.min(y), x.max(y))
            }
            TimeFn::Piecewise(s) => s.range(t0, t1),
        }
    }
}

impl FromStr for TimeFn {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (name, args) = parse_call(s)?;
        match name.as_str() {
            "constant" => arity(&name, &args, 1).map(|_| TimeFn::Constant(args[0])),
            "affine" => arity(&name, &args, 2).map(|_| TimeFn::Affine {
                a: args[0],
                b: args[1],
            }),
            "piecewise" => Steps::from_args(&args).map(TimeFn::Piecewise),
            _ => Err(format!("unknown time-function family `{name}` (constant, affine, piecewise)")),
        }
    }
}

impl fmt::Display for TimeFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeFn::Constant(c) => write!(f, "constant({c})"),
            TimeFn::Affine { a, b } => write!(f, "affine({a}, {b})"),
            TimeFn::Piecewise(s) => write!(f, "piecewise({})", join(&s.args())),
        }
    }
}

/// Local volatility `σ(x, t)` of the asset, in price units per √time.
#[derive(Debug, Clone, PartialEq)]
pub enum VolFn {
    /// `σ̄ x`
    Geometric(f64),
    /// Normal (absolute) volatility.
    Constant(f64),
    /// `a + b x`
    Affine { a: f64, b: f64 },
}

impl VolFn {
    pub fn eval(&self, x: f64, _t: f64) -> f64 {
        match self {
            VolFn::Geometric(s) => s * x,
            VolFn::Constant(s) => *s,
            VolFn::Affine { a, b } => a + b * x,
        }
    }

    /// True when the family is identically zero.
    pub fn vanishes(&self) -> bool {
        match self {
            VolFn::Geometric(s) | VolFn::Constant(s) => *s == 0.0,
            VolFn::Affine { a, b } => *a == 0.0 && *b == 0.0,
        }
    }
}

impl FromStr for VolFn {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (name, args) = parse_call(s)?;
        match name.as_str() {
            "geometric" => arity(&name, &args, 1).map(|_| VolFn::Geometric(args[0])),
            "constant" => arity(&name, &args, 1).map(|_| VolFn::Constant(args[0])),
            "affine" => arity(&name, &args, 2).map(|_| VolFn::Affine {
                a: args[0],
                b: args[1],
            }),
            _ => Err(format!("unknown volatility family `{name}` (geometric, constant, affine)")),
        }
    }
}

impl fmt::Display for VolFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VolFn::Geometric(s) => write!(f, "geometric({s})"),
            VolFn::Constant(s) => write!(f, "constant({s})"),
            VolFn::Affine { a, b } => write!(f, "affine({a}, {b})"),
        }
    }
}

/// Default intensity `λ(t, x)`.
#[derive(Debug, Clone, PartialEq)]
pub enum IntensityFn {
    Constant(f64),
    /// `a + b t`
    Affine { a: f64, b: f64 },
    Piecewise(Steps),
    /// `scale / (1 + exp(-slope (x - center)))`
    Logistic { scale: f64, slope: f64, center: f64 },
}

impl IntensityFn {
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        match self {
            IntensityFn::Constant(c) => *c,
            IntensityFn::Affine { a, b } => a + b * t,
            IntensityFn::Piecewise(s) => s.eval(t),
            IntensityFn::Logistic {
                scale,
                slope,
                center,
            } => scale / (1.0 + (-slope * (x - center)).exp()),
        }
    }

    /// Whether the intensity is a function of time alone.
    pub fn is_state_free(&self) -> bool {
        !matches!(self, IntensityFn::Logistic { .. })
    }

    /// Exact time integral for state-free families.
    pub fn integral(&self, a: f64, b: f64) -> Option<f64> {
        match self {
            IntensityFn::Constant(c) => Some(c * (b - a)),
            IntensityFn::Affine { a: a0, b: b1 } => {
                Some(a0 * (b - a) + 0.5 * b1 * (b * b - a * a))
            }
            IntensityFn::Piecewise(s) => Some(s.integral(a, b)),
            IntensityFn::Logistic { .. } => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            IntensityFn::Constant(c) => *c == 0.0,
            IntensityFn::Affine { a, b } => *a == 0.0 && *b == 0.0,
            IntensityFn::Piecewise(s) => s.values.iter().all(|v| *v == 0.0),
            IntensityFn::Logistic { scale, .. } => *scale == 0.0,
        }
    }
}

impl FromStr for IntensityFn {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (name, args) = parse_call(s)?;
        match name.as_str() {
            "constant" => arity(&name, &args, 1).map(|_| IntensityFn::Constant(args[0])),
            "affine" => arity(&name, &args, 2).map(|_| IntensityFn::Affine {
                a: args[0],
                b: args[1],
            }),
            "piecewise" => Steps::from_args(&args).map(IntensityFn::Piecewise),
            "logistic" => arity(&name, &args, 3).map(|_| IntensityFn::Logistic {
                scale: args[0],
                slope: args[1],
                center: args[2],
            }),
            _ => Err(format!(
                "unknown intensity family `{name}` (constant, affine, piecewise, logistic)"
            )),
        }
    }
}

impl fmt::Display for IntensityFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IntensityFn::Constant(c) => write!(f, "constant({c})"),
            IntensityFn::Affine { a, b } => write!(f, "affine({a}, {b})"),
            IntensityFn::Piecewise(s) => write!(f, "piecewise({})", join(&s.args())),
            IntensityFn::Logistic {
                scale,
                slope,
                center,
            } => write!(f, "logistic({scale}, {slope}, {center})"),
        }
    }
}

/// Terminal payoff `Φ(x)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Payoff {
    Call(f64),
    Put(f64),
    /// `a + b x`
    Linear { a: f64, b: f64 },
    Constant(f64),
    /// `|x - k|`
    Straddle(f64),
}

impl Payoff {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Payoff::Call(k) => (x - k).max(0.0),
            Payoff::Put(k) => (k - x).max(0.0),
            Payoff::Linear { a, b } => a + b * x,
            Payoff::Constant(c) => *c,
            Payoff::Straddle(k) => (x - k).abs(),
        }
    }
}

impl FromStr for Payoff {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (name, args) = parse_call(s)?;
        match name.as_str() {
            "call" => arity(&name, &args, 1).map(|_| Payoff::Call(args[0])),
            "put" => arity(&name, &args, 1).map(|_| Payoff::Put(args[0])),
            "linear" => arity(&name, &args, 2).map(|_| Payoff::Linear {
                a: args[0],
                b: args[1],
            }),
            "constant" => arity(&name, &args, 1).map(|_| Payoff::Constant(args[0])),
            "straddle" => arity(&name, &args, 1).map(|_| Payoff::Straddle(args[0])),
            _ => Err(format!(
                "unknown payoff family `{name}` (call, put, linear, constant, straddle)"
            )),
        }
    }
}

impl fmt::Display for Payoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Payoff::Call(k) => write!(f, "call({k})"),
            Payoff::Put(k) => write!(f, "put({k})"),
            Payoff::Linear { a, b } => write!(f, "linear({a}, {b})"),
            Payoff::Constant(c) => write!(f, "constant({c})"),
            Payoff::Straddle(k) => write!(f, "straddle({k})"),
        }
    }
}

/// Contractual dividend / coupon rate `π(t, x)`.
#[derive(Debug, Clone, PartialEq)]
pub enum DividendFn {
    Zero,
    Constant(f64),
    /// `a + b x`
    Affine { a: f64, b: f64 },
}

impl DividendFn {
    pub fn eval(&self, _t: f64, x: f64) -> f64 {
        match self {
            DividendFn::Zero => 0.0,
            DividendFn::Constant(c) => *c,
            DividendFn::Affine { a, b } => a + b * x,
        }
    }
}

impl FromStr for DividendFn {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (name, args) = parse_call(s)?;
        match name.as_str() {
            "zero" => arity(&name, &args, 0).map(|_| DividendFn::Zero),
            "constant" => arity(&name, &args, 1).map(|_| DividendFn::Constant(args[0])),
            "affine" => arity(&name, &args, 2).map(|_| DividendFn::Affine {
                a: args[0],
                b: args[1],
            }),
            _ => Err(format!("unknown dividend family `{name}` (zero, constant, affine)")),
        }
    }
}

impl fmt::Display for DividendFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DividendFn::Zero => write!(f, "zero"),
            DividendFn::Constant(c) => write!(f, "constant({c})"),
            DividendFn::Affine { a, b } => write!(f, "affine({a}, {b})"),
        }
    }
}

/// Hedge account functional `H(t, x, v, z)`.
#[derive(Debug, Clone, PartialEq)]
pub enum HedgeFn {
    Zero,
    /// `H = z`
    Delta,
    /// `H = k z`
    Scaled(f64),
    /// `H = k v²`; not Lipschitz, kept so the assumption probe has a failing case.
    QuadraticV(f64),
}

impl HedgeFn {
    pub fn eval(&self, _t: f64, _x: f64, v: f64, z: f64) -> f64 {
        match self {
            HedgeFn::Zero => 0.0,
            HedgeFn::Delta => z,
            HedgeFn::Scaled(k) => k * z,
            HedgeFn::QuadraticV(k) => k * v * v,
        }
    }
}

impl FromStr for HedgeFn {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (name, args) = parse_call(s)?;
        match name.as_str() {
            "zero" => arity(&name, &args, 0).map(|_| HedgeFn::Zero),
            "delta" => arity(&name, &args, 0).map(|_| HedgeFn::Delta),
            "scaled" => arity(&name, &args, 1).map(|_| HedgeFn::Scaled(args[0])),
            "quadratic_v" => arity(&name, &args, 1).map(|_| HedgeFn::QuadraticV(args[0])),
            // a bare 0 means no hedge account
            "constant" if args == [0.0] => Ok(HedgeFn::Zero),
            _ => Err(format!(
                "unknown hedge family `{name}` (zero, delta, scaled, quadratic_v)"
            )),
        }
    }
}

impl fmt::Display for HedgeFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HedgeFn::Zero => write!(f, "zero"),
            HedgeFn::Delta => write!(f, "delta"),
            HedgeFn::Scaled(k) => write!(f, "scaled({k})"),
            HedgeFn::QuadraticV(k) => write!(f, "quadratic_v({k})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bare_number_is_constant() {
        assert_eq!("0.02".parse::<TimeFn>().unwrap(), TimeFn::Constant(0.02));
        assert_eq!(
            "constant(0.1)".parse::<IntensityFn>().unwrap(),
            IntensityFn::Constant(0.1)
        );
    }

    #[test]
    fn display_round_trips() {
        for s in ["affine(0.01, 0.002)", "piecewise(0.01, 0.5, 0.02, 1, 0.03)"] {
            let f: TimeFn = s.parse().unwrap();
            assert_eq!(f.to_string().parse::<TimeFn>().unwrap(), f);
        }
        let p: Payoff = "call(100)".parse().unwrap();
        assert_eq!(p.to_string(), "call(100)");
        let l: IntensityFn = "logistic(0.05, 1, 0)".parse().unwrap();
        assert_eq!(l.to_string().parse::<IntensityFn>().unwrap(), l);
    }

    #[test]
    fn rejects_unknown_families_and_bad_arity() {
        assert!("cubic(1)".parse::<TimeFn>().is_err());
        assert!("call(1, 2)".parse::<Payoff>().is_err());
        assert!("geometric(x)".parse::<VolFn>().is_err());
        assert!("piecewise(1, 2)".parse::<TimeFn>().is_err());
    }

    #[test]
    fn piecewise_eval_and_integral() {
        let f: TimeFn = "piecewise(1, 0.5, 2, 1.0, 3)".parse().unwrap();
        assert_eq!(f.eval(0.0), 1.0);
        assert_eq!(f.eval(0.5), 2.0);
        assert_eq!(f.eval(2.0), 3.0);
        assert!((f.integral(0.0, 2.0) - (0.5 + 1.0 + 3.0)).abs() < 1e-15);
        assert!((f.integral(0.25, 0.75) - (0.25 + 0.5)).abs() < 1e-15);
        assert_eq!(f.range(0.0, 0.7), (1.0, 2.0));
    }

    #[test]
    fn affine_integral_matches_midpoint_rule() {
        let f = TimeFn::Affine { a: 0.01, b: 0.02 };
        let exact = f.integral(0.3, 1.7);
        let n = 1000;
        let h = 1.4 / n as f64;
        let mid: f64 = (0..n).map(|i| f.eval(0.3 + (i as f64 + 0.5) * h) * h).sum();
        assert!((exact - mid).abs() < 1e-14);
    }

    #[test]
    fn payoffs() {
        assert_eq!(Payoff::Call(100.0).eval(110.0), 10.0);
        assert_eq!(Payoff::Put(100.0).eval(110.0), 0.0);
        assert_eq!(Payoff::Straddle(100.0).eval(90.0), 10.0);
        assert_eq!(Payoff::Linear { a: 0.0, b: 1.0 }.eval(7.0), 7.0);
    }

    #[test]
    fn logistic_is_state_dependent() {
        let l = IntensityFn::Logistic {
            scale: 0.05,
            slope: 1.0,
            center: 0.0,
        };
        assert!(!l.is_state_free());
        assert!((l.eval(0.0, 0.0) - 0.025).abs() < 1e-15);
        assert!(l.integral(0.0, 1.0).is_none());
    }
}
