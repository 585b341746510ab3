//! Least-squares projection on polynomials of the standardized state.
//!
//! The state is the asset price and, optionally, the path accumulator. Both
//! are standardized before the monomials `u^a w^b` with `a + b ≤ degree` are
//! formed. A variable with no spread across paths is dropped. When the Gram
//! matrix is numerically singular the degree is reduced and a warning logged.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

/// Paths per Gram chunk. Fixed so that sums are formed in the same order
/// whatever the number of threads.
const CHUNK: usize = 2048;

/// Largest accepted condition number of the normalized Gram matrix.
const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RegressionBasis {
    pub degree: usize,
}

impl Default for RegressionBasis {
    fn default() -> Self {
        RegressionBasis { degree: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Scale {
    mean: f64,
    sd: f64,
}

impl Scale {
    fn of(xs: &[f64]) -> Option<Scale> {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let sd = var.sqrt();
        if sd > 1e-12 * (1.0 + mean.abs()) {
            Some(Scale { mean, sd })
        } else {
            None
        }
    }

    fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.sd
    }
}

/// A fitted projection for one or more targets sharing the same design.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    sx: Option<Scale>,
    si: Option<Scale>,
    powers: Vec<(u32, u32)>,
    coeffs: Vec<Vec<f64>>,
    pub degree: usize,
    pub condition: f64,
}

fn powers_for(degree: usize, use_x: bool, use_i: bool) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    for total in 0..=degree as u32 {
        for a in (0..=total).rev() {
            let b = total - a;
            if (a > 0 && !use_x) || (b > 0 && !use_i) {
                continue;
            }
            out.push((a, b));
        }
    }
    out
}

fn features(powers: &[(u32, u32)], u: f64, w: f64, out: &mut [f64]) {
    for (slot, &(a, b)) in out.iter_mut().zip(powers) {
        *slot = u.powi(a as i32) * w.powi(b as i32);
    }
}

impl Projection {
    pub fn n_targets(&self) -> usize {
        self.coeffs.len()
    }

    pub fn predict(&self, target: usize, x: f64, i: f64) -> f64 {
        let u = self.sx.map_or(0.0, |s| s.apply(x));
        let w = self.si.map_or(0.0, |s| s.apply(i));
        self.powers
            .iter()
            .zip(&self.coeffs[target])
            .map(|(&(a, b), c)| c * u.powi(a as i32) * w.powi(b as i32))
            .sum()
    }

    pub fn predict_all(&self, target: usize, x: &[f64], i: Option<&[f64]>) -> Vec<f64> {
        (0..x.len())
            .into_par_iter()
            .with_min_len(CHUNK)
            .map(|p| self.predict(target, x[p], i.map_or(0.0, |i| i[p])))
            .collect()
    }
}

impl RegressionBasis {
    /// Projects each of `targets` on the basis evaluated at `(x, i)`.
    pub fn fit(&self, x: &[f64], i: Option<&[f64]>, targets: &[&[f64]]) -> Result<Projection> {
        let n = x.len();
        if n == 0 || targets.iter().any(|t| t.len() != n) || i.is_some_and(|i| i.len() != n) {
            return Err(Error::Usage("regression inputs must be non-empty and of equal length".into()));
        }
        if self.degree == 0 {
            return Err(Error::Usage("regression degree must be at least 1".into()));
        }
        let sx = Scale::of(x);
        let si = i.and_then(Scale::of);
        let mut degree = self.degree;
        loop {
            let powers = powers_for(degree, sx.is_some(), si.is_some());
            match self.solve(x, i, targets, sx, si, &powers) {
                Some((coeffs, condition)) => {
                    return Ok(Projection {
                        sx,
                        si,
                        powers,
                        coeffs,
                        degree,
                        condition,
                    })
                }
                None if degree > 1 => {
                    log::warn!("regression design is rank deficient at degree {degree}; reducing");
                    degree -= 1;
                }
                None => {
                    return Err(Error::Numeric(
                        "regression design is rank deficient even at degree 1".into(),
                    ))
                }
            }
        }
    }

    fn solve(
        &self,
        x: &[f64],
        i: Option<&[f64]>,
        targets: &[&[f64]],
        sx: Option<Scale>,
        si: Option<Scale>,
        powers: &[(u32, u32)],
    ) -> Option<(Vec<Vec<f64>>, f64)> {
        let p = powers.len();
        let nt = targets.len();
        let n = x.len();
        let partials: Vec<(Vec<f64>, Vec<f64>)> = (0..n.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut gram = vec![0.0; p * p];
                let mut rhs = vec![0.0; p * nt];
                let mut phi = vec![0.0; p];
                for q in c * CHUNK..((c + 1) * CHUNK).min(n) {
                    let u = sx.map_or(0.0, |s| s.apply(x[q]));
                    let w = si.map_or(0.0, |s| s.apply(i.map_or(0.0, |i| i[q])));
                    features(powers, u, w, &mut phi);
                    for a in 0..p {
                        for b in a..p {
                            gram[a * p + b] += phi[a] * phi[b];
                        }
                        for (t, target) in targets.iter().enumerate() {
                            rhs[t * p + a] += phi[a] * target[q];
                        }
                    }
                }
                (gram, rhs)
            })
            .collect();
        let mut gram = DMatrix::<f64>::zeros(p, p);
        let mut rhs = DMatrix::<f64>::zeros(p, nt);
        for (g, r) in &partials {
            for a in 0..p {
                for b in a..p {
                    gram[(a, b)] += g[a * p + b];
                }
                for t in 0..nt {
                    rhs[(a, t)] += r[t * p + a];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                gram[(a, b)] = gram[(b, a)];
            }
        }
        gram /= n as f64;
        rhs /= n as f64;

        let diag: Vec<f64> = (0..p).map(|a| gram[(a, a)].sqrt()).collect();
        if diag.iter().any(|d| !(*d > 0.0)) {
            return None;
        }
        let normalized = DMatrix::from_fn(p, p, |a, b| gram[(a, b)] / (diag[a] * diag[b]));
        let eig = normalized.clone().symmetric_eigenvalues();
        let (lo, hi) = eig
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e)));
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if !(condition < MAX_CONDITION) {
            return None;
        }
        let chol = normalized.cholesky()?;
        let scaled_rhs = DMatrix::from_fn(p, nt, |a, t| rhs[(a, t)] / diag[a]);
        let sol = chol.solve(&scaled_rhs);
        let coeffs = (0..nt)
            .map(|t| {
                let col: DVector<f64> = sol.column(t).into_owned();
                (0..p).map(|a| col[a] / diag[a]).collect()
            })
            .collect();
        Some((coeffs, condition))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_cubic() {
        let x: Vec<f64> = (0..500).map(|k| 50.0 + 0.2 * k as f64).collect();
        let i: Vec<f64> = (0..500).map(|k| ((k * 37) % 101) as f64 / 10.0).collect();
        let y: Vec<f64> = x
            .iter()
            .zip(&i)
            .map(|(x, i)| 1.0 + 0.5 * x - 0.01 * x * x + 2.0 * i + 0.1 * x * i + 1e-4 * x * x * x)
            .collect();
        let fit = RegressionBasis { degree: 3 }.fit(&x, Some(&i), &[&y]).unwrap();
        assert_eq!(fit.degree, 3);
        for p in (0..500).step_by(37) {
            assert!((fit.predict(0, x[p], i[p]) - y[p]).abs() < 1e-7);
        }
    }

    #[test]
    fn constant_state_gives_the_mean() {
        let x = vec![100.0; 64];
        let y: Vec<f64> = (0..64).map(|k| k as f64).collect();
        let fit = RegressionBasis::default().fit(&x, None, &[&y]).unwrap();
        assert!((fit.predict(0, 100.0, 0.0) - 31.5).abs() < 1e-12);
        let c = vec![7.0; 64];
        let fit = RegressionBasis::default().fit(&x, None, &[&c]).unwrap();
        assert_eq!(fit.predict(0, 100.0, 0.0), 7.0);
    }

    #[test]
    fn fitted_values_preserve_the_mean() {
        let x: Vec<f64> = (0..1000).map(|k| (k as f64 * 0.37).sin() * 20.0 + 100.0).collect();
        let y: Vec<f64> = x.iter().map(|x| (x - 100.0).max(0.0) + (x * 3.1).cos()).collect();
        let fit = RegressionBasis::default().fit(&x, None, &[&y]).unwrap();
        let fitted = fit.predict_all(0, &x, None);
        let m1 = y.iter().sum::<f64>() / 1000.0;
        let m2 = fitted.iter().sum::<f64>() / 1000.0;
        assert!((m1 - m2).abs() < 1e-10);
    }

    #[test]
    fn too_few_distinct_points_reduce_degree() {
        let x: Vec<f64> = (0..100).map(|k| (k % 2) as f64).collect();
        let y: Vec<f64> = x.iter().map(|x| 3.0 + x).collect();
        let fit = RegressionBasis { degree: 3 }.fit(&x, None, &[&y]).unwrap();
        assert_eq!(fit.degree, 1);
        assert!((fit.predict(0, 1.0, 0.0) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn result_independent_of_thread_count() {
        let x: Vec<f64> = (0..20_000).map(|k| (k as f64 * 0.013).sin()).collect();
        let y: Vec<f64> = x.iter().map(|x| x.exp()).collect();
        let a = RegressionBasis::default().fit(&x, None, &[&y]).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| RegressionBasis::default().fit(&x, None, &[&y]).unwrap());
        assert_eq!(a, b);
    }
}
