//! Forward simulation of the asset and of the cumulative hazards.

use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::bve;
use crate::cox::{default_times, DefaultScenario, HazardView, IntensityModel};
use crate::error::{Error, Result};
use crate::funcs::{DividendFn, Payoff, TimeFn, VolFn};
use crate::rng::{block_rng, substream, BLOCK, STREAM_BVE, STREAM_PATHS};

/// Asset dynamics `dS = r S dt + σ(S, t) dW` and the contract payoffs.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketModel {
    pub r: TimeFn,
    pub sigma: VolFn,
    pub s0: f64,
    pub phi: Payoff,
    pub pi: DividendFn,
}

impl MarketModel {
    /// Geometric model with constant rate, a payoff and no dividends.
    pub fn black_scholes(s0: f64, r: f64, vol: f64, phi: Payoff) -> Self {
        MarketModel {
            r: TimeFn::Constant(r),
            sigma: VolFn::Geometric(vol),
            s0,
            phi,
            pi: DividendFn::Zero,
        }
    }
}

/// Strictly increasing simulation grid starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 || times[0] != 0.0 {
            return Err(Error::Usage("time grid needs at least two nodes starting at 0".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Usage("time grid steps must be positive".into()));
        }
        Ok(TimeGrid { times })
    }

    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        if steps == 0 || !(horizon > 0.0) {
            return Err(Error::Usage(format!(
                "uniform grid needs steps ≥ 1 and a positive horizon, got {steps} and {horizon}"
            )));
        }
        let times = (0..=steps)
            .map(|k| horizon * k as f64 / steps as f64)
            .collect();
        Self::new(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn dt(&self, k: usize) -> f64 {
        self.times[k + 1] - self.times[k]
    }

    pub fn horizon(&self) -> f64 {
        self.times[self.times.len() - 1]
    }
}

/// Simulated asset and hazard paths. Row `p` is path `p`; column `k` is time
/// `grid.times()[k]` (the increments `dw[p, k]` drive step `k → k+1`).
#[derive(Debug, Clone)]
pub struct PathBundle {
    pub grid: TimeGrid,
    pub s: Array2<f64>,
    pub dw: Array2<f64>,
    pub big_lambda1: Array2<f64>,
    pub big_lambda2: Array2<f64>,
    pub seed: u64,
    /// Euler steps that went negative and were floored at 0.
    pub floored: usize,
}

impl PathBundle {
    pub fn n_paths(&self) -> usize {
        self.s.nrows()
    }

    pub fn hazards(&self, p: usize) -> HazardView<'_> {
        fn row(m: &Array2<f64>, p: usize) -> &[f64] {
            let cols = m.ncols();
            &m.as_slice().expect("bundle matrices are row-major")[p * cols..(p + 1) * cols]
        }
        HazardView::new(
            self.grid.times(),
            row(&self.big_lambda1, p),
            row(&self.big_lambda2, p),
        )
        .expect("simulated hazards are non-decreasing")
    }

    /// One BVE threshold pair per path, drawn from the `bve` substream of the
    /// bundle seed and inverted against that path's hazards.
    pub fn default_scenarios(&self, intensity: &IntensityModel) -> Result<Vec<DefaultScenario>> {
        let params = intensity.bve_params()?;
        let z = bve::sample(&params, substream(self.seed, STREAM_BVE), self.n_paths());
        Ok(z.iter()
            .enumerate()
            .map(|(p, z)| DefaultScenario {
                path: p,
                ..default_times(&self.hazards(p), z)
            })
            .collect())
    }

    /// Index of the grid node at time `t`.
    pub fn node(&self, t: f64) -> Result<usize> {
        self.grid
            .times()
            .iter()
            .position(|&s| (s - t).abs() <= 1e-12 * (1.0 + t.abs()))
            .ok_or_else(|| Error::Domain(format!("time {t} is not a node of the simulation grid")))
    }

    /// CSV with columns `path_id,t,s,Lambda1,Lambda2`.
    pub fn dump_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "path_id,t,s,Lambda1,Lambda2").map_err(io)?;
        for p in 0..self.n_paths() {
            for (k, t) in self.grid.times().iter().enumerate() {
                writeln!(
                    w,
                    "{p},{t},{},{},{}",
                    self.s[[p, k]],
                    self.big_lambda1[[p, k]],
                    self.big_lambda2[[p, k]]
                )
                .map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }
}

struct Block {
    s: Vec<f64>,
    dw: Vec<f64>,
    l1: Vec<f64>,
    l2: Vec<f64>,
    floored: usize,
}

fn simulate_block(
    market: &MarketModel,
    intensity: &IntensityModel,
    grid: &TimeGrid,
    stream: u64,
    block: usize,
    rows: usize,
) -> Block {
    let m = grid.steps();
    let cols = m + 1;
    let mut rng = block_rng(stream, block);
    let mut out = Block {
        s: vec![0.0; rows * cols],
        dw: vec![0.0; rows * m],
        l1: vec![0.0; rows * cols],
        l2: vec![0.0; rows * cols],
        floored: 0,
    };
    let t = grid.times();
    for p in 0..rows {
        let base = p * cols;
        out.s[base] = market.s0;
        for (k, &tk) in t.iter().enumerate().take(m) {
            let dt = grid.dt(k);
            let x = out.s[base + k];
            let xi: f64 = StandardNormal.sample(&mut rng);
            let dw = xi * dt.sqrt();
            out.dw[p * m + k] = dw;
            let mut next = x + market.r.eval(tk) * x * dt + market.sigma.eval(x, tk) * dw;
            if next < 0.0 {
                next = 0.0;
                out.floored += 1;
            }
            out.s[base + k + 1] = next;
            let (a, b) = intensity.rates(tk, x);
            out.l1[base + k + 1] = out.l1[base + k] + a * dt;
            out.l2[base + k + 1] = out.l2[base + k] + b * dt;
        }
    }
    out
}

/// Euler–Maruyama paths of the asset with left-endpoint hazard accumulation.
/// Paths are generated in fixed blocks, each with its own generator derived
/// from `seed`, so the bundle does not depend on the thread count.
pub fn simulate_paths(
    market: &MarketModel,
    intensity: &IntensityModel,
    grid: &TimeGrid,
    n: usize,
    seed: u64,
) -> Result<PathBundle> {
    if n == 0 {
        return Err(Error::Usage("path count must be at least 1".into()));
    }
    let stream = substream(seed, STREAM_PATHS);
    let n_blocks = n.div_ceil(BLOCK);
    let blocks: Vec<Block> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let rows = BLOCK.min(n - b * BLOCK);
            simulate_block(market, intensity, grid, stream, b, rows)
        })
        .collect();
    let cols = grid.steps() + 1;
    let mut s = Vec::with_capacity(n * cols);
    let mut dw = Vec::with_capacity(n * (cols - 1));
    let mut l1 = Vec::with_capacity(n * cols);
    let mut l2 = Vec::with_capacity(n * cols);
    let mut floored = 0;
    for b in blocks {
        s.extend_from_slice(&b.s);
        dw.extend_from_slice(&b.dw);
        l1.extend_from_slice(&b.l1);
        l2.extend_from_slice(&b.l2);
        floored += b.floored;
    }
    let shape = |v: Vec<f64>, c: usize| Array2::from_shape_vec((n, c), v).expect("block sizes add up");
    Ok(PathBundle {
        grid: grid.clone(),
        s: shape(s, cols),
        dw: shape(dw, cols - 1),
        big_lambda1: shape(l1, cols),
        big_lambda2: shape(l2, cols),
        seed,
        floored,
    })
}

/// `D(s, t) = exp(-∫ₛᵗ r du)`.
pub fn discount(market: &MarketModel, s: f64, t: f64) -> Result<f64> {
    if s > t {
        return Err(Error::Domain(format!("discount needs s ≤ t, got s = {s}, t = {t}")));
    }
    Ok((-market.r.integral(s, t)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::Estimate;

    fn no_credit() -> IntensityModel {
        IntensityModel::constant(0.0, 0.0, 0.0).unwrap()
    }

    #[test]
    fn zero_vol_follows_the_ode() {
        let mut m = MarketModel::black_scholes(100.0, 0.05, 0.0, Payoff::Call(100.0));
        m.sigma = VolFn::Constant(0.0);
        let grid = TimeGrid::uniform(1.0, 1000).unwrap();
        let b = simulate_paths(&m, &no_credit(), &grid, 3, 1).unwrap();
        let exact = 100.0 * 0.05f64.exp();
        for p in 0..3 {
            assert!(((b.s[[p, 1000]] - exact) / exact).abs() < 1e-3);
        }
    }

    #[test]
    fn geometric_driftless_is_martingale() {
        let m = MarketModel::black_scholes(100.0, 0.0, 0.2, Payoff::Call(100.0));
        let grid = TimeGrid::uniform(1.0, 20).unwrap();
        let b = simulate_paths(&m, &no_credit(), &grid, 100_000, 7).unwrap();
        let terminal: Vec<f64> = b.s.column(20).to_vec();
        let est = Estimate::from_samples(&terminal);
        assert!(est.z_score(100.0) < 3.0, "{est:?}");
    }

    #[test]
    fn rerun_is_bit_identical() {
        let m = MarketModel::black_scholes(100.0, 0.02, 0.2, Payoff::Call(100.0));
        let model = IntensityModel::constant(0.02, 0.03, 1.0).unwrap();
        let grid = TimeGrid::uniform(1.0, 10).unwrap();
        let a = simulate_paths(&m, &model, &grid, 1, 42).unwrap();
        let b = simulate_paths(&m, &model, &grid, 1, 42).unwrap();
        assert_eq!(a.s, b.s);
        assert_eq!(a.big_lambda1, b.big_lambda1);
        let c = simulate_paths(&m, &model, &grid, 5000, 42).unwrap();
        assert_eq!(a.s.row(0), c.s.row(0));
    }

    #[test]
    fn hazards_accumulate_left_endpoint() {
        let m = MarketModel::black_scholes(100.0, 0.02, 0.2, Payoff::Call(100.0));
        let model = IntensityModel::constant(0.02, 0.03, 1.0).unwrap();
        let grid = TimeGrid::uniform(2.0, 8).unwrap();
        let b = simulate_paths(&m, &model, &grid, 4, 3).unwrap();
        assert!((b.big_lambda1[[2, 8]] - 0.04).abs() < 1e-15);
        assert!((b.big_lambda2[[3, 4]] - 0.03).abs() < 1e-15);
        assert_eq!(b.s[[1, 0]], 100.0);
    }

    #[test]
    fn bad_grids_are_usage_errors() {
        assert!(matches!(TimeGrid::new(vec![0.0, 1.0, 1.0]), Err(Error::Usage(_))));
        assert!(matches!(TimeGrid::uniform(1.0, 0), Err(Error::Usage(_))));
        let m = MarketModel::black_scholes(100.0, 0.02, 0.2, Payoff::Call(100.0));
        let grid = TimeGrid::uniform(1.0, 2).unwrap();
        assert!(simulate_paths(&m, &no_credit(), &grid, 0, 1).is_err());
    }

    #[test]
    fn discount_examples() {
        let m = MarketModel::black_scholes(100.0, 0.05, 0.2, Payoff::Call(100.0));
        assert!((discount(&m, 0.0, 2.0).unwrap() - 0.9048374180359595).abs() < 1e-15);
        assert_eq!(discount(&m, 1.5, 1.5).unwrap(), 1.0);
        let prod = discount(&m, 0.0, 1.0).unwrap() * discount(&m, 1.0, 2.0).unwrap();
        assert!((prod - discount(&m, 0.0, 2.0).unwrap()).abs() < 1e-12);
        assert!(matches!(discount(&m, 2.0, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let m = MarketModel::black_scholes(100.0, 0.02, 0.2, Payoff::Call(100.0));
        let grid = TimeGrid::uniform(1.0, 2).unwrap();
        let b = simulate_paths(&m, &no_credit(), &grid, 2, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("paths.csv");
        b.dump_csv(&file).unwrap();
        let text = std::fs::read_to_string(&file).unwrap();
        assert!(text.starts_with("path_id,t,s,Lambda1,Lambda2\n"));
        assert_eq!(text.lines().count(), 1 + 2 * 3);
    }
}
