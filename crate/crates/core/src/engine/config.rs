//! Strict, versioned run configuration.
//!
//! The file is TOML with the sections `[market] [intensity] [contract]
//! [solver.mc] [solver.pde] [output]`. Unknown keys are errors. Every problem
//! is reported with its dotted key path, and all problems are collected
//! before failing.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::bsde::PicardSettings;
use crate::cashflows::{ContractTerms, SimultaneousRule};
use crate::cox::{IntensityModel, SignMode};
use crate::error::{ConfigIssue, Error, Result};
use crate::funcs::{DividendFn, HedgeFn, IntensityFn, Payoff, TimeFn, VolFn};
use crate::paths::MarketModel;
use crate::pde::PdeGrid;
use crate::regression::RegressionBasis;

pub const SCHEMA_VERSION: i64 = 1;

/// Monte-Carlo solver settings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McSettings {
    pub n: usize,
    pub seed: u64,
    pub steps: usize,
    pub basis: RegressionBasis,
    pub picard: PicardSettings,
}

/// Output format switches.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputSettings {
    pub dir: PathBuf,
    pub json: bool,
    pub csv: bool,
    pub dump_paths: bool,
    /// Keep every `surface_stride`-th node in the surface dump.
    pub surface_stride: usize,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub schema_version: i64,
    pub market: MarketModel,
    pub intensity: IntensityModel,
    pub contract: ContractTerms,
    pub mc: McSettings,
    pub pde: PdeGrid,
    pub output: OutputSettings,
    /// Hex sha256 of the source text.
    pub hash: String,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let root: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("<file>", e.message().to_string()))?;
        let mut r = Reader::default();
        let config = r.read(&root, text);
        match config {
            Some(c) if r.issues.is_empty() => Ok(c),
            _ => Err(Error::Config(r.issues)),
        }
    }

    pub fn seed(&self) -> u64 {
        self.mc.seed
    }

    /// Same configuration with another common-shock weight.
    pub fn with_alpha_bar(&self, alpha_bar: f64) -> Result<Self> {
        if !(alpha_bar >= 0.0 && alpha_bar.is_finite()) {
            return Err(Error::config("intensity.alpha_bar", "must be finite and non-negative"));
        }
        let mut out = self.clone();
        out.intensity.alpha_bar = alpha_bar;
        Ok(out)
    }
}

#[derive(Default)]
struct Reader {
    issues: Vec<ConfigIssue>,
}

/// One section being read; tracks which keys were consumed.
struct Section<'a> {
    name: &'static str,
    table: Option<&'a Table>,
    seen: Vec<&'static str>,
}

impl Reader {
    fn issue(&mut self, key: impl Into<String>, message: impl Into<String>) {
        self.issues.push(ConfigIssue {
            key: key.into(),
            message: message.into(),
        });
    }

    fn section<'a>(&mut self, root: &'a Table, name: &'static str, required: bool) -> Section<'a> {
        let mut node = Some(root);
        for part in name.split('.') {
            node = match node.and_then(|t| t.get(part)) {
                Some(Value::Table(t)) => Some(t),
                Some(_) => {
                    self.issue(name, "must be a section");
                    None
                }
                None => None,
            };
        }
        if node.is_none() && required {
            self.issue(name, "missing required section");
        }
        Section {
            name,
            table: node,
            seen: Vec::new(),
        }
    }

    fn raw<'a>(&mut self, s: &mut Section<'a>, key: &'static str, required: bool) -> Option<&'a Value> {
        s.seen.push(key);
        let v = s.table.and_then(|t| t.get(key));
        if v.is_none() && required && s.table.is_some() {
            self.issue(format!("{}.{key}", s.name), "missing required key");
        }
        v
    }

    fn number(&mut self, s: &mut Section<'_>, key: &'static str, default: Option<f64>) -> Option<f64> {
        match self.raw(s, key, default.is_none()) {
            None => default,
            Some(Value::Float(x)) => Some(*x),
            Some(Value::Integer(i)) => Some(*i as f64),
            Some(_) => {
                self.issue(format!("{}.{key}", s.name), "expected a number");
                None
            }
        }
    }

    fn count(&mut self, s: &mut Section<'_>, key: &'static str, default: usize) -> Option<usize> {
        match self.raw(s, key, false) {
            None => Some(default),
            Some(Value::Integer(i)) if *i >= 0 => Some(*i as usize),
            Some(_) => {
                self.issue(format!("{}.{key}", s.name), "expected a non-negative integer");
                None
            }
        }
    }

    fn flag(&mut self, s: &mut Section<'_>, key: &'static str, default: bool) -> Option<bool> {
        match self.raw(s, key, false) {
            None => Some(default),
            Some(Value::Boolean(b)) => Some(*b),
            Some(_) => {
                self.issue(format!("{}.{key}", s.name), "expected true or false");
                None
            }
        }
    }

    fn text(&mut self, s: &mut Section<'_>, key: &'static str, default: Option<&str>) -> Option<String> {
        match self.raw(s, key, default.is_none()) {
            None => default.map(str::to_string),
            Some(Value::String(x)) => Some(x.clone()),
            Some(_) => {
                self.issue(format!("{}.{key}", s.name), "expected a string");
                None
            }
        }
    }

    /// A registry function, written `name(args)` or as a bare number.
    fn func<T>(&mut self, s: &mut Section<'_>, key: &'static str, default: Option<&str>) -> Option<T>
    where
        T: FromStr<Err = String>,
    {
        let src = match self.raw(s, key, default.is_none()) {
            None => default?.to_string(),
            Some(Value::String(x)) => x.clone(),
            Some(Value::Float(x)) => format!("{x}"),
            Some(Value::Integer(i)) => format!("{i}"),
            Some(_) => {
                self.issue(format!("{}.{key}", s.name), "expected a function or a number");
                return None;
            }
        };
        self.parsed(s.name, key, &src)
    }

    fn parsed<T: FromStr>(&mut self, section: &str, key: &str, src: &str) -> Option<T>
    where
        T::Err: Display,
    {
        match src.parse() {
            Ok(v) => Some(v),
            Err(e) => {
                self.issue(format!("{section}.{key}"), e.to_string());
                None
            }
        }
    }

    fn finish(&mut self, s: Section<'_>) {
        let Some(t) = s.table else { return };
        for k in t.keys() {
            let nested = s.name == "solver" && (k == "mc" || k == "pde");
            if !s.seen.contains(&k.as_str()) && !nested {
                self.issue(format!("{}.{k}", s.name), "unknown key");
            }
        }
    }

    fn check(&mut self, ok: bool, key: &str, message: impl Into<String>) {
        if !ok {
            self.issue(key, message);
        }
    }

    fn read(&mut self, root: &Table, text: &str) -> Option<RunConfig> {
        for k in root.keys() {
            if !["schema_version", "market", "intensity", "contract", "solver", "output"].contains(&k.as_str()) {
                self.issue(k.clone(), "unknown key");
            }
        }
        let schema_version = match root.get("schema_version") {
            Some(Value::Integer(v)) if *v == SCHEMA_VERSION => Some(*v),
            Some(Value::Integer(v)) => {
                self.issue("schema_version", format!("unsupported version {v}, expected {SCHEMA_VERSION}"));
                None
            }
            Some(_) => {
                self.issue("schema_version", "expected an integer");
                None
            }
            None => {
                self.issue("schema_version", "missing required key");
                None
            }
        };

        let mut m = self.section(root, "market", true);
        let s0 = self.number(&mut m, "s0", None);
        let r: Option<TimeFn> = self.func(&mut m, "r", None);
        let sigma: Option<VolFn> = self.func(&mut m, "sigma", None);
        let phi: Option<Payoff> = self.func(&mut m, "payoff", None);
        let pi: Option<DividendFn> = self.func(&mut m, "dividend", Some("zero"));
        self.finish(m);

        let mut i = self.section(root, "intensity", true);
        let lambda1: Option<IntensityFn> = self.func(&mut i, "lambda1", None);
        let lambda2: Option<IntensityFn> = self.func(&mut i, "lambda2", None);
        let alpha_bar = self.number(&mut i, "alpha_bar", None);
        let lambda_min = self.number(&mut i, "lambda_min", Some(0.0));
        let lambda_max = self.number(&mut i, "lambda_max", Some(1.0));
        let sign_mode = self
            .text(&mut i, "sign_mode", Some("instantaneous"))
            .and_then(|v| self.parsed::<SignMode>("intensity", "sign_mode", &v));
        self.finish(i);

        let mut c = self.section(root, "contract", true);
        let fc: Option<TimeFn> = self.func(&mut c, "c", None);
        let ff: Option<TimeFn> = self.func(&mut c, "f", None);
        let fh: Option<TimeFn> = self.func(&mut c, "h", None);
        let lgd_i = self.number(&mut c, "lgd_i", None);
        let lgd_c = self.number(&mut c, "lgd_c", None);
        let alpha_coll: Option<TimeFn> = self.func(&mut c, "alpha_coll", None);
        let bilateral = self.flag(&mut c, "bilateral", true);
        let maturity = self.number(&mut c, "T", None);
        let hedge: Option<HedgeFn> = self.func(&mut c, "hedge", Some("zero"));
        let rule = self
            .text(&mut c, "simultaneous_rule", Some("both"))
            .and_then(|v| self.parsed::<SimultaneousRule>("contract", "simultaneous_rule", &v));
        self.finish(c);

        let solver = self.section(root, "solver", false);
        self.finish(solver);
        let mut s = self.section(root, "solver.mc", false);
        let n = self.count(&mut s, "n", 100_000);
        let seed = self.count(&mut s, "seed", 42);
        let steps = self.count(&mut s, "steps", 50);
        let degree = self.count(&mut s, "basis_degree", 3);
        let tol = self.number(&mut s, "picard_tol", Some(1e-4));
        let max_iter = self.count(&mut s, "picard_max_iter", 20);
        self.finish(s);

        let s0_or = s0.unwrap_or(1.0);
        let mut p = self.section(root, "solver.pde", false);
        let x_min = self.number(&mut p, "x_min", Some(0.0));
        let x_max = self.number(&mut p, "x_max", Some(4.0 * s0_or));
        let n_x = self.count(&mut p, "nx", 200);
        let n_t = self.count(&mut p, "nt", 100);
        let n_i = self.count(&mut p, "ni", 20);
        let theta = self.number(&mut p, "theta", Some(0.5));
        let rannacher = self.flag(&mut p, "rannacher", true);
        let pilot_paths = self.count(&mut p, "pilot_paths", 4096);
        let pilot_steps = self.count(&mut p, "pilot_steps", 50);
        self.finish(p);

        let mut o = self.section(root, "output", false);
        let dir = self.text(&mut o, "dir", Some("out"));
        let json = self.flag(&mut o, "json", true);
        let csv = self.flag(&mut o, "csv", true);
        let dump_paths = self.flag(&mut o, "dump_paths", false);
        let surface_stride = self.count(&mut o, "surface_stride", 4);
        self.finish(o);

        // range checks on whatever parsed
        if let Some(x) = s0 {
            self.check(x > 0.0 && x.is_finite(), "market.s0", "must be positive");
        }
        if let Some(sg) = &sigma {
            self.check(
                !sg.vanishes(),
                "market.sigma",
                "volatility vanishes identically; the forward equation needs a non-vanishing volatility",
            );
        }
        if let Some(ab) = alpha_bar {
            self.check(ab >= 0.0 && ab.is_finite(), "intensity.alpha_bar", "must be finite and non-negative");
        }
        if let (Some(lo), Some(hi)) = (lambda_min, lambda_max) {
            self.check(0.0 <= lo && lo <= hi, "intensity.lambda_max", "bounds must satisfy 0 <= lambda_min <= lambda_max");
        }
        if let Some(t) = maturity {
            self.check(t > 0.0 && t.is_finite(), "contract.T", "maturity must be positive");
        }
        let horizon = maturity.filter(|t| *t > 0.0).unwrap_or(1.0);
        for (key, v) in [("contract.lgd_i", lgd_i), ("contract.lgd_c", lgd_c)] {
            if let Some(v) = v {
                self.check((0.0..=1.0).contains(&v), key, format!("must lie in [0, 1], got {v}"));
            }
        }
        if let Some(a) = &alpha_coll {
            let (lo, hi) = a.range(0.0, horizon);
            self.check(
                0.0 <= lo && hi <= 1.0,
                "contract.alpha_coll",
                format!("collateral fraction must lie in [0, 1], ranges over [{lo}, {hi}]"),
            );
        }
        for (key, l) in [("intensity.lambda1", &lambda1), ("intensity.lambda2", &lambda2)] {
            if let (Some(l), Some(lo), Some(hi)) = (l, lambda_min, lambda_max) {
                let (a, b) = probe_range(l, horizon, x_min.unwrap_or(0.0), x_max.unwrap_or(s0_or));
                self.check(
                    lo <= a && b <= hi,
                    key,
                    format!("intensity ranges over [{a}, {b}], outside the declared [{lo}, {hi}]"),
                );
            }
        }
        if let Some(n) = n {
            self.check(n >= 2, "solver.mc.n", "need at least 2 paths");
        }
        if let Some(n) = steps {
            self.check(n >= 1, "solver.mc.steps", "need at least 1 step");
        }
        if let Some(t) = tol {
            self.check(t > 0.0, "solver.mc.picard_tol", "must be positive");
        }
        if let Some(m) = max_iter {
            self.check(m >= 1, "solver.mc.picard_max_iter", "must be at least 1");
        }
        if let Some(s) = surface_stride {
            self.check(s >= 1, "output.surface_stride", "must be at least 1");
        }

        let market = MarketModel {
            r: r?,
            sigma: sigma?,
            s0: s0?,
            phi: phi?,
            pi: pi?,
        };
        let mut intensity = IntensityModel::new(lambda1?, lambda2?, alpha_bar?).ok()?;
        intensity.lambda_min = lambda_min?;
        intensity.lambda_max = lambda_max?;
        intensity.sign_mode = sign_mode?;
        let contract = ContractTerms {
            c: fc?,
            f: ff?,
            h: fh?,
            lgd_i: lgd_i?,
            lgd_c: lgd_c?,
            alpha_coll: alpha_coll?,
            bilateral: bilateral?,
            maturity: maturity?,
            hedge: hedge?,
            simultaneous_rule: rule?,
        };
        let picard = PicardSettings {
            tol: tol?,
            max_iter: max_iter?,
        };
        let mc = McSettings {
            n: n?,
            seed: seed? as u64,
            steps: steps?,
            basis: RegressionBasis { degree: degree? },
            picard,
        };
        let mut pde = PdeGrid::new(x_min?, x_max?, n_x?, n_t?);
        pde.n_i = n_i?;
        pde.theta = theta?;
        pde.rannacher = rannacher?;
        pde.pilot_paths = pilot_paths?;
        pde.pilot_steps = pilot_steps?;
        pde.picard = picard;
        pde.seed = mc.seed;
        if let Err(e) = pde.check(market.s0, true) {
            self.issue("solver.pde", e.to_string());
        }
        let output = OutputSettings {
            dir: PathBuf::from(dir?),
            json: json?,
            csv: csv?,
            dump_paths: dump_paths?,
            surface_stride: surface_stride?,
        };
        Some(RunConfig {
            schema_version: schema_version?,
            market,
            intensity,
            contract,
            mc,
            pde,
            output,
            hash: hex::encode(Sha256::digest(text.as_bytes())),
        })
    }
}

/// Range of an intensity over `[0, T] × [x_lo, x_hi]`.
fn probe_range(l: &IntensityFn, horizon: f64, x_lo: f64, x_hi: f64) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for a in 0..=20 {
        let t = horizon * a as f64 / 20.0;
        for b in 0..=50 {
            let x = x_lo + (x_hi - x_lo) * b as f64 / 50.0;
            let v = l.eval(t, x);
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    (lo, hi)
}
