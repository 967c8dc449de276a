//! Damped Gauss-Newton (Levenberg–Marquardt) least squares with finite-difference Jacobians.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop when an accepted step lowers the residual sum of squares by less than this fraction.
    pub ftol: f64,
    /// Stop when the step is this small relative to the parameters.
    pub xtol: f64,
    /// Number of starting points (the given one plus seeded perturbations).
    pub starts: usize,
    /// Perturbations multiply each start coordinate by `exp(U(−spread, spread))`.
    pub spread: f64,
    pub seed: u64,
    /// Residual sum of squares at or below which the fit counts as exact. Along a flat valley of
    /// an exact fit every step still gains a sizeable fraction, so the relative test never fires.
    #[serde(default)]
    pub rss_floor: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions { max_iterations: 400, ftol: 1e-14, xtol: 1e-13, starts: 8, spread: 1.0, seed: 0x5eed_f17, rss_floor: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmOutcome {
    pub x: Vec<f64>,
    pub rss: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Residual norm after every iteration.
    pub trace: Vec<f64>,
    /// `(JᵀJ)⁻¹` at the solution, when invertible.
    pub covariance_unscaled: Option<DMatrix<f64>>,
    pub residuals: usize,
}

fn rss_of(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

fn jacobian<F: Fn(&[f64]) -> Vec<f64>>(f: &F, x: &[f64], m: usize) -> DMatrix<f64> {
    let n = x.len();
    let mut j = DMatrix::zeros(m, n);
    let mut xp = x.to_vec();
    for c in 0..n {
        let h = 1e-6 * x[c].abs().max(1e-3);
        xp[c] = x[c] + h;
        let rp = f(&xp);
        xp[c] = x[c] - h;
        let rm = f(&xp);
        xp[c] = x[c];
        for r in 0..m {
            j[(r, c)] = (rp[r] - rm[r]) / (2.0 * h);
        }
    }
    j
}

/// Single Levenberg–Marquardt descent from `x0` on the residual vector `f`.
pub fn levenberg_marquardt<F: Fn(&[f64]) -> Vec<f64>>(f: &F, x0: &[f64], opts: &LmOptions) -> LmOutcome {
    let mut x = x0.to_vec();
    let mut r = f(&x);
    let m = r.len();
    let mut rss = rss_of(&r);
    let mut lambda = 1e-3;
    let mut trace = vec![rss.sqrt()];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        iterations += 1;
        if !rss.is_finite() {
            break;
        }
        if rss <= opts.rss_floor {
            converged = true;
            break;
        }
        let j = jacobian(f, &x, m);
        let jt = j.transpose();
        let jtj = &jt * &j;
        let g = &jt * DVector::from_column_slice(&r);
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for d in 0..x.len() {
                a[(d, d)] += lambda * jtj[(d, d)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&(-&g)) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let rt = f(&trial);
            let rss_t = rss_of(&rt);
            if rss_t.is_finite() && rss_t <= rss {
                let small_step = step.iter().zip(&x).all(|(s, xi)| s.abs() <= opts.xtol * (xi.abs() + opts.xtol));
                let small_gain = rss - rss_t <= opts.ftol * rss;
                x = trial;
                r = rt;
                rss = rss_t;
                lambda = (lambda / 3.0).max(1e-15);
                accepted = true;
                if small_step || small_gain {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        trace.push(rss.sqrt());
        if !accepted {
            // no downhill step at any damping: a stationary point to working precision
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }
    let j = jacobian(f, &x, m);
    let covariance_unscaled = (j.transpose() * &j).try_inverse();
    LmOutcome { x, rss, iterations, converged, trace, covariance_unscaled, residuals: m }
}

/// Runs [`levenberg_marquardt`] from `x0` and `opts.starts − 1` seeded perturbations, keeping the best.
///
/// Coordinates listed in `log_scaled` are perturbed additively (they already live on a log scale).
pub fn multi_start<F: Fn(&[f64]) -> Vec<f64>>(
    f: &F,
    x0: &[f64],
    log_scaled: &[bool],
    opts: &LmOptions,
) -> Result<LmOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<LmOutcome> = None;
    for s in 0..opts.starts.max(1) {
        let start: Vec<f64> = if s == 0 {
            x0.to_vec()
        } else {
            x0.iter()
                .enumerate()
                .map(|(i, &v)| {
                    let u: f64 = rng.random_range(-opts.spread..opts.spread);
                    if log_scaled.get(i).copied().unwrap_or(false) {
                        v + u
                    } else {
                        v * u.exp()
                    }
                })
                .collect()
        };
        let out = levenberg_marquardt(f, &start, opts);
        if out.rss.is_finite() && best.as_ref().is_none_or(|b| out.rss < b.rss) {
            best = Some(out);
        }
    }
    let best = best.ok_or_else(|| Error::FitFailed { iterations: 0, residual: f64::NAN, trace: Vec::new() })?;
    if !best.converged {
        return Err(Error::FitFailed { iterations: best.iterations, residual: best.rss.sqrt(), trace: best.trace });
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParam {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
}

/// Estimated parameters with residual diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub parameters: Vec<FitParam>,
    pub residual_norm: f64,
    pub samples: usize,
    pub iterations: usize,
    #[serde(default)]
    pub diagnostics: BTreeMap<String, f64>,
}

impl FitReport {
    pub fn get(&self, name: &str) -> Option<&FitParam> {
        self.parameters.iter().find(|p| p.name == name)
    }

    pub fn estimate(&self, name: &str) -> Option<f64> {
        self.get(name).map(|p| p.estimate)
    }

    /// Builds a report from an outcome; `transform[i]` maps the raw coordinate to the reported
    /// value and its derivative (for delta-method standard errors).
    pub fn from_outcome(names: &[&str], outcome: &LmOutcome, transform: &[fn(f64) -> (f64, f64)], samples: usize) -> Self {
        let p = outcome.x.len();
        let dof = outcome.residuals.saturating_sub(p).max(1) as f64;
        let s2 = outcome.rss / dof;
        let parameters = (0..p)
            .map(|i| {
                let (value, deriv) = transform[i](outcome.x[i]);
                let var = outcome.covariance_unscaled.as_ref().map(|c| c[(i, i)] * s2).unwrap_or(f64::NAN);
                FitParam { name: names[i].to_string(), estimate: value, std_error: (var.max(0.0)).sqrt() * deriv.abs() }
            })
            .collect();
        FitReport {
            parameters,
            residual_norm: outcome.rss.sqrt(),
            samples,
            iterations: outcome.iterations,
            diagnostics: BTreeMap::new(),
        }
    }
}

pub fn identity(x: f64) -> (f64, f64) {
    (x, 1.0)
}

pub fn exp_transform(x: f64) -> (f64, f64) {
    let e = x.exp();
    (e, e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock_residuals() {
        let f = |x: &[f64]| vec![10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0]];
        let out = levenberg_marquardt(&f, &[-1.2, 1.0], &LmOptions::default());
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-8 && (out.x[1] - 1.0).abs() < 1e-8, "{:?}", out.x);
    }

    #[test]
    fn exponential_decay_fit() {
        let ts: Vec<f64> = (0..30).map(|i| i as f64 * 0.2).collect();
        let ys: Vec<f64> = ts.iter().map(|t| 3.0 * (-0.7 * t).exp()).collect();
        let f = |p: &[f64]| ts.iter().zip(&ys).map(|(t, y)| p[0] * (-p[1] * t).exp() - y).collect::<Vec<_>>();
        let out = multi_start(&f, &[1.0, 0.2], &[false, false], &LmOptions::default()).unwrap();
        assert!((out.x[0] - 3.0).abs() < 1e-9 && (out.x[1] - 0.7).abs() < 1e-9);
    }
}
