//! Stationary Fokker-Planck density of the price velocity.
//!
//! With drift `μ(v) = −v/τ` and
//! `σ²(v) = v0²/(n0²τ²) · [k0² tanh²(v/v0) + k_inf − k1 sech²(v/v0)]`
//! the zero-flux solution is `p(v) ∝ (2/σ²(v)) · exp(2 ∫₀^v μ/σ² du)`.
//! Writing `t = tanh(v/v0)` the bracket equals `(k0² + k1) t² + (k_inf − k1)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::MarketOrderParams;
use crate::quad;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FPParams {
    pub k0: f64,
    pub k_inf: f64,
    pub k1: f64,
    pub v0: f64,
    pub n0: f64,
    pub tau: f64,
}

impl FPParams {
    pub fn from_market_orders(mo: &MarketOrderParams, n0: f64, tau: f64) -> Self {
        FPParams { k0: mo.k0, k_inf: mo.k_inf, k1: mo.k1, v0: mo.v0, n0, tau }
    }

    pub fn with_n0(self, n0: f64) -> Self {
        FPParams { n0, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let FPParams { k0, k_inf, k1, v0, n0, tau } = *self;
        if ![k0, k_inf, k1, v0, n0, tau].iter().all(|x| x.is_finite()) {
            return Err(Error::domain("Fokker-Planck parameters must be finite"));
        }
        if k0 < 0.0 || k1 < 0.0 || k_inf < 0.0 {
            return Err(Error::domain("k0, k_inf and k1 must be >= 0"));
        }
        if !(v0 > 0.0 && n0 > 0.0 && tau > 0.0) {
            return Err(Error::domain(format!("need v0, n0, tau > 0 (got {v0}, {n0}, {tau})")));
        }
        if k1 > k_inf {
            return Err(Error::domain(format!(
                "k1 = {k1} exceeds k_inf = {k_inf}: the diffusion bracket is negative near v = 0"
            )));
        }
        Ok(())
    }

    /// `v0² / (n0² τ²)`
    fn prefactor(&self) -> f64 {
        (self.v0 / (self.n0 * self.tau)).powi(2)
    }

    /// Quadratic coefficient `k0² + k1` of the bracket in `tanh(v/v0)`.
    pub fn a_coeff(&self) -> f64 {
        self.k0 * self.k0 + self.k1
    }

    /// Bracket value at rest, `k_inf − k1`.
    pub fn epsilon(&self) -> f64 {
        self.k_inf - self.k1
    }

    /// Variance `τ σ²(0) / 2` of the Gaussian core.
    pub fn core_variance(&self) -> f64 {
        self.tau * self.prefactor() * self.epsilon() / 2.0
    }

    /// Crossover `v0 · √((k_inf − k1)/(k0² + k1))` between the core and the power-law regime.
    pub fn core_width(&self) -> f64 {
        let a = self.a_coeff();
        if a == 0.0 {
            f64::INFINITY
        } else {
            self.v0 * (self.epsilon() / a).sqrt()
        }
    }

    /// Standard deviation `√(τ σ²(∞) / 2)` of the Gaussian tail beyond `v0`.
    pub fn outer_width(&self) -> f64 {
        (self.tau * self.prefactor() * (self.k0 * self.k0 + self.k_inf) / 2.0).sqrt()
    }
}

/// `μ(v) = −v / τ`
pub fn drift(v: f64, tau: f64) -> f64 {
    -v / tau
}

/// `k0² tanh²(v/v0) + k_inf − k1 sech²(v/v0)`, possibly negative for invalid constants.
#[inline]
pub fn activity_bracket(v: f64, k0: f64, k_inf: f64, k1: f64, v0: f64) -> f64 {
    let t = (v / v0).tanh();
    let t2 = t * t;
    k0 * k0 * t2 + k_inf - k1 * (1.0 - t2)
}

pub fn diffusion_coefficient(v: f64, p: &FPParams) -> Result<f64> {
    p.validate()?;
    let b = activity_bracket(v, p.k0, p.k_inf, p.k1, p.v0);
    if b < 0.0 {
        return Err(Error::domain(format!("diffusion bracket is negative ({b}) at v = {v}")));
    }
    Ok(p.prefactor() * b)
}

/// Positive pdf decay exponent `2 + 2 n0² / k0²` of the intermediate regime.
pub fn tail_exponent(p: &FPParams) -> Result<f64> {
    if !(p.k0 > 0.0) {
        return Err(Error::domain("k0 = 0: no power-law regime"));
    }
    if !(p.n0 > 0.0) {
        return Err(Error::domain("n0 must be > 0"));
    }
    Ok(2.0 + 2.0 * p.n0 * p.n0 / (p.k0 * p.k0))
}

/// Intermediate-regime exponent `2 + 2 n0² τ / (k0² + k1)` including the tick and `k1`.
pub fn effective_tail_exponent(p: &FPParams) -> Result<f64> {
    let a = p.a_coeff();
    if !(p.k0 > 0.0) || a == 0.0 {
        return Err(Error::domain("k0 = 0: no power-law regime"));
    }
    Ok(2.0 + 2.0 * p.n0 * p.n0 * p.tau / a)
}

/// Tabulated stationary density on a symmetric velocity grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnDensity {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    /// Trapezoidal mass of `density` over `grid` after normalization.
    pub normalization: f64,
}

impl ReturnDensity {
    /// Cumulative distribution at the grid points (trapezoidal).
    pub fn cumulative(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.grid.len());
        let mut acc = 0.0;
        out.push(0.0);
        for i in 1..self.grid.len() {
            acc += 0.5 * (self.density[i] + self.density[i - 1]) * (self.grid[i] - self.grid[i - 1]);
            out.push(acc);
        }
        let total = acc;
        if total > 0.0 {
            for c in &mut out {
                *c /= total;
            }
        }
        out
    }

    /// Piecewise-linear CDF interpolation, clamped to `[0, 1]` outside the grid.
    pub fn cdf_fn(&self) -> impl Fn(f64) -> f64 + '_ {
        let cum = self.cumulative();
        move |v: f64| {
            let g = &self.grid;
            if v <= g[0] {
                return 0.0;
            }
            if v >= g[g.len() - 1] {
                return 1.0;
            }
            let i = g.partition_point(|&x| x <= v) - 1;
            let w = (v - g[i]) / (g[i + 1] - g[i]);
            cum[i] * (1.0 - w) + cum[i + 1] * w
        }
    }

    /// Trapezoidal `∫ v^k p(v) dv` over the grid.
    pub fn moment(&self, k: i32) -> f64 {
        let f = |i: usize| self.grid[i].powi(k) * self.density[i];
        (1..self.grid.len()).map(|i| 0.5 * (f(i) + f(i - 1)) * (self.grid[i] - self.grid[i - 1])).sum()
    }
}

/// Symmetric `sinh`-spaced grid of `2·half + 1` points on `[−v_max, v_max]`, fine near 0 on scale `a`.
pub fn sinh_grid(v_max: f64, a: f64, half: usize) -> Vec<f64> {
    let u_max = (v_max / a).asinh();
    let pos: Vec<f64> = (1..=half).map(|i| a * (u_max * i as f64 / half as f64).sinh()).collect();
    let mut grid: Vec<f64> = pos.iter().rev().map(|v| -v).collect();
    grid.push(0.0);
    grid.extend(pos);
    grid
}

/// Grid that resolves the core and reaches far into the outer Gaussian regime.
pub fn default_grid(p: &FPParams, half: usize) -> Vec<f64> {
    let core = p.core_variance().sqrt();
    let outer = p.outer_width();
    let v_max = (15.0 * core).max(3.0 * p.v0 + 15.0 * outer);
    let a = (core.min(p.v0) / 10.0).max(v_max * 1e-14);
    sinh_grid(v_max, a, half)
}

/// Unnormalized `ln p(v)` at each nonnegative point of `abs_grid` (increasing, starting at ≥ 0).
fn log_density_half(p: &FPParams, abs_grid: &[f64]) -> Vec<f64> {
    let c = p.prefactor();
    let integrand = |u: f64| -> f64 {
        let s2 = c * activity_bracket(u, p.k0, p.k_inf, p.k1, p.v0);
        drift(u, p.tau) / s2
    };
    let mut out = Vec::with_capacity(abs_grid.len());
    let mut exponent = 0.0;
    let mut prev = 0.0;
    for &v in abs_grid {
        if v > prev {
            let r = quad::integrate(integrand, prev, v, 1e-300, 1e-12);
            exponent += r.value;
            prev = v;
        }
        let s2 = c * activity_bracket(v, p.k0, p.k_inf, p.k1, p.v0);
        out.push((2.0 / s2).ln() + 2.0 * exponent);
    }
    out
}

/// Stationary density on a grid that must be symmetric about 0.
pub fn stationary_density(p: &FPParams, grid: &[f64]) -> Result<ReturnDensity> {
    p.validate()?;
    let n = grid.len();
    if n < 3 {
        return Err(Error::domain("velocity grid needs at least 3 points"));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("velocity grid must be strictly increasing"));
    }
    for i in 0..n / 2 {
        let (a, b) = (grid[i], grid[n - 1 - i]);
        if (a + b).abs() > 1e-12 * b.abs().max(a.abs()) {
            return Err(Error::domain("velocity grid must be symmetric about 0"));
        }
    }
    if p.epsilon() == 0.0 {
        return Err(Error::numeric(
            "non-normalizable core: with k1 = k_inf the density behaves as |v|^(-2-2n0²τ/(k0²+k1)) \
             near v = 0 and its mass diverges",
        ));
    }

    // evaluate on |v| for the upper half, mirror for the lower half
    let upper: Vec<f64> = grid[n / 2..].iter().map(|v| v.abs()).collect();
    let mut order: Vec<usize> = (0..upper.len()).collect();
    order.sort_by(|&i, &j| upper[i].total_cmp(&upper[j]));
    let sorted: Vec<f64> = order.iter().map(|&i| upper[i]).collect();
    let logs_sorted = log_density_half(p, &sorted);
    let mut logs_upper = vec![0.0; upper.len()];
    for (k, &i) in order.iter().enumerate() {
        logs_upper[i] = logs_sorted[k];
    }
    let mut logs = vec![0.0; n];
    for (k, &l) in logs_upper.iter().enumerate() {
        let i = n / 2 + k;
        logs[i] = l;
        logs[n - 1 - i] = l;
    }
    if logs.iter().any(|l| l.is_nan()) {
        return Err(Error::numeric("density evaluation produced NaN"));
    }
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut density: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let mass: f64 = (1..n).map(|i| 0.5 * (density[i] + density[i - 1]) * (grid[i] - grid[i - 1])).sum();
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::numeric(format!("density mass on the grid is {mass}")));
    }
    for d in &mut density {
        *d /= mass;
    }
    let normalization = (1..n).map(|i| 0.5 * (density[i] + density[i - 1]) * (grid[i] - grid[i - 1])).sum();
    Ok(ReturnDensity { grid: grid.to_vec(), density, normalization })
}

/// `⟨v²⟩` under the stationary density conditioned on boundary volume `n0`.
pub fn variance_given_n0(n0: f64, p: &FPParams) -> Result<f64> {
    let q = p.with_n0(n0);
    q.validate()?;
    if q.k0 > 0.0 {
        let e = effective_tail_exponent(&q)?;
        if e <= 3.0 {
            return Err(Error::numeric(format!(
                "tail exponent {e:.4} <= 3: second moment diverges in the power-law regime"
            )));
        }
    }
    let half = 4000;
    let grid = default_grid(&q, half);
    let d = stationary_density(&q, &grid)?;
    // integrate in the sinh coordinate where the integrand is smooth
    let a = (q.core_variance().sqrt().min(q.v0) / 10.0).max(grid[grid.len() - 1] * 1e-14);
    let du = (grid[grid.len() - 1] / a).asinh() / half as f64;
    let jac = |v: f64| (a * a + v * v).sqrt();
    let (mut m0, mut m2) = (0.0, 0.0);
    for (i, (&v, &pv)) in d.grid.iter().zip(&d.density).enumerate() {
        let w = if i == 0 || i == grid.len() - 1 { 0.5 } else { 1.0 };
        m0 += w * pv * jac(v) * du;
        m2 += w * pv * v * v * jac(v) * du;
    }
    Ok(m2 / m0)
}

/// Closed-form small-|v| approximation `(A v²/v0² + ε)^(−1 − n0²τ/A)`, unnormalized.
pub fn student_core(v: f64, p: &FPParams) -> f64 {
    let a = p.a_coeff();
    let z = v / p.v0;
    (a * z * z + p.epsilon()).powf(-1.0 - p.n0 * p.n0 * p.tau / a)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> FPParams {
        FPParams { k0: 1.0, k_inf: 0.3, k1: 0.1, v0: 1.0, n0: 1.0, tau: 1.0 }
    }

    #[test]
    fn drift_values() {
        assert_eq!(drift(0.0, 1.0), 0.0);
        assert_eq!(drift(2.0, 1.0), -2.0);
        assert_eq!(drift(3.0 * 0.7, 2.0), 3.0 * drift(0.7, 2.0));
    }

    #[test]
    fn diffusion_limits() {
        let p = FPParams { k1: 0.3, ..base() };
        assert_eq!(diffusion_coefficient(0.0, &p).unwrap(), 0.0);
        let q = base();
        let far = diffusion_coefficient(50.0, &q).unwrap();
        assert!((far - (1.0 + 0.3)).abs() < 1e-12);
        assert_eq!(diffusion_coefficient(0.4, &q).unwrap(), diffusion_coefficient(-0.4, &q).unwrap());
        assert!(diffusion_coefficient(0.0, &FPParams { k1: 0.5, ..base() }).is_err());
    }

    #[test]
    fn tail_exponent_values() {
        let p = FPParams { k0: 3.0, n0: 3.0, ..base() };
        assert_eq!(tail_exponent(&p).unwrap(), 4.0);
        let q = FPParams { n0: 3.0 * 2f64.sqrt(), ..p };
        assert!((tail_exponent(&q).unwrap() - 6.0).abs() < 1e-12);
        assert!((tail_exponent(&FPParams { k0: 1e8, ..p }).unwrap() - 2.0).abs() < 1e-12);
        assert!(tail_exponent(&FPParams { k0: 0.0, ..p }).is_err());
    }

    #[test]
    fn density_normalized_and_even() {
        let p = base();
        let grid = default_grid(&p, 800);
        let d = stationary_density(&p, &grid).unwrap();
        assert!((d.normalization - 1.0).abs() < 1e-9);
        let n = grid.len();
        for i in 0..n / 2 {
            assert_eq!(d.density[i], d.density[n - 1 - i]);
        }
        assert!(d.moment(1).abs() < 1e-12);
    }

    #[test]
    fn singular_core_rejected() {
        let p = FPParams { k1: 0.3, ..base() };
        let grid = sinh_grid(5.0, 0.01, 100);
        assert!(matches!(stationary_density(&p, &grid), Err(Error::Numeric(_))));
    }

    #[test]
    fn asymmetric_grid_rejected() {
        assert!(stationary_density(&base(), &[-1.0, 0.0, 2.0]).is_err());
    }

    #[test]
    fn pure_gaussian_when_k0_and_k1_vanish() {
        // σ² constant ⇒ Ornstein–Uhlenbeck with variance τσ²/2
        let p = FPParams { k0: 0.0, k1: 0.0, k_inf: 2.0, v0: 1.0, n0: 2.0, tau: 1.0 };
        let var = variance_given_n0(2.0, &p).unwrap();
        assert!((var - p.core_variance()).abs() < 1e-9 * var);
    }

    #[test]
    fn small_v_follows_student_form() {
        let p = FPParams { k0: 1.0, k_inf: 1e-6, k1: 0.0, v0: 1.0, n0: 1.0, tau: 1.0 };
        let grid = default_grid(&p, 600);
        let d = stationary_density(&p, &grid).unwrap();
        let mid = grid.len() / 2;
        let r0 = d.density[mid] / student_core(0.0, &p);
        for i in mid..mid + 300 {
            if grid[i] > 0.02 {
                break;
            }
            let r = d.density[i] / student_core(grid[i], &p);
            assert!((r / r0 - 1.0).abs() < 5e-3, "v = {} ratio {}", grid[i], r / r0);
        }
    }
}
