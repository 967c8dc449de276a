//! One-sided (maximally skewed) α-stable variates for order placement and
//! cancellation noise.
//!
//! Samples follow the `S(α, β = 1, γ, 0)` law in the standard (type 1)
//! parametrization with `0 < α < 1`, which is supported on `[0, ∞)`. At
//! `α = 1/2` this is the Lévy distribution with scale `c = γ`, whose CDF is
//! `erfc(√(c / 2x))`.
//!
//! Draws use the Chambers-Mallows-Stuck transform specialised to `β = 1`; the
//! `α = 1/2` case takes the exact shortcut `1 / Z²` with `Z` standard normal.
//! Draws above the configured quantile are capped at that quantile.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

/// Default truncation: cap draws at the `1 - 1e-6` quantile.
pub const DEFAULT_TRUNCATION_QUANTILE: f64 = 1.0 - 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StableParams {
    /// Stability index, strictly inside `(0, 1)`.
    pub alpha: f64,
    /// Scale `γ ≥ 0` in order-volume units.
    pub scale: f64,
    /// Probability in `(0, 1]` above which draws are capped; `1` disables the cap.
    #[serde(default = "default_truncation")]
    pub truncation_quantile: f64,
}

fn default_truncation() -> f64 {
    DEFAULT_TRUNCATION_QUANTILE
}

impl Default for StableParams {
    fn default() -> Self {
        Self { alpha: 0.5, scale: 1.0, truncation_quantile: DEFAULT_TRUNCATION_QUANTILE }
    }
}

impl StableParams {
    pub fn new(alpha: f64, scale: f64, truncation_quantile: f64) -> Result<Self> {
        let p = Self { alpha, scale, truncation_quantile };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::domain(format!("stable index alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.scale >= 0.0 && self.scale.is_finite()) {
            return Err(Error::domain(format!("stable scale must be finite and >= 0, got {}", self.scale)));
        }
        if !(self.truncation_quantile > 0.0 && self.truncation_quantile <= 1.0) {
            return Err(Error::domain(format!(
                "truncation quantile must lie in (0, 1], got {}",
                self.truncation_quantile
            )));
        }
        Ok(())
    }
}

/// `P(X > x)` for the unit-scale one-sided stable law.
///
/// Uses Kanter's integral representation of the positive stable law with
/// Laplace transform `exp(-s^α)`, rescaled to the type-1 parametrization.
pub fn unit_survival(alpha: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    let y = x * (FRAC_PI_2 * alpha).cos().powf(1.0 / alpha);
    let z = y.powf(-alpha / (1.0 - alpha));
    let integrand = |u: f64| {
        let a = kanter_a(alpha, u);
        -(-a * z).exp_m1()
    };
    let r = quad::integrate(integrand, 0.0, PI, 1e-300, 1e-11);
    (r.value / PI).clamp(0.0, 1.0)
}

/// `P(X ≤ x)` for the unit-scale one-sided stable law.
pub fn unit_cdf(alpha: f64, x: f64) -> f64 {
    1.0 - unit_survival(alpha, x)
}

fn kanter_a(alpha: f64, u: f64) -> f64 {
    let s = u.sin();
    if s <= 0.0 {
        return if u < FRAC_PI_2 { kanter_a_at_zero(alpha) } else { f64::INFINITY };
    }
    let num = (alpha * u).sin().powf(alpha) * ((1.0 - alpha) * u).sin().powf(1.0 - alpha);
    (num / s).powf(1.0 / (1.0 - alpha))
}

fn kanter_a_at_zero(alpha: f64) -> f64 {
    (alpha.powf(alpha) * (1.0 - alpha).powf(1.0 - alpha)).powf(1.0 / (1.0 - alpha))
}

/// Quantile of the unit-scale one-sided stable law; `q = 1` maps to `+∞`.
pub fn unit_quantile(alpha: f64, q: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("stable index alpha must lie in (0, 1), got {alpha}")));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::domain(format!("quantile must lie in (0, 1], got {q}")));
    }
    if q == 1.0 {
        return Ok(f64::INFINITY);
    }
    let target = 1.0 - q;
    // bracket in log space; survival is strictly decreasing
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while unit_survival(alpha, hi.exp()) > target {
        lo = hi;
        hi *= 2.0;
        if hi > 700.0 {
            return Err(Error::numeric(format!("quantile {q} beyond representable range")));
        }
    }
    while unit_survival(alpha, lo.exp()) < target {
        hi = lo;
        lo = if lo == 0.0 { -1.0 } else { lo * 2.0 };
        if lo < -700.0 {
            return Err(Error::numeric(format!("quantile {q} below representable range")));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if unit_survival(alpha, mid.exp()) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

/// Sampler for a validated [`StableParams`].
#[derive(Debug, Clone)]
pub struct OneSidedStable {
    params: StableParams,
    unit_cap: f64,
    cap: f64,
    cms: CmsConstants,
}

#[derive(Debug, Clone, Copy)]
struct CmsConstants {
    half: bool,
    prefactor: f64,
    inv_alpha: f64,
    exponent: f64,
}

impl OneSidedStable {
    pub fn new(params: StableParams) -> Result<Self> {
        params.validate()?;
        let alpha = params.alpha;
        let unit_cap = unit_quantile(alpha, params.truncation_quantile)?;
        let cap = if unit_cap.is_finite() { params.scale * unit_cap } else { f64::INFINITY };
        let cms = CmsConstants {
            half: alpha == 0.5,
            prefactor: (FRAC_PI_2 * alpha).cos().powf(-1.0 / alpha),
            inv_alpha: 1.0 / alpha,
            exponent: (1.0 - alpha) / alpha,
        };
        Ok(Self { params, unit_cap, cap, cms })
    }

    pub fn params(&self) -> &StableParams {
        &self.params
    }

    /// Value at which draws are capped (`+∞` when untruncated).
    pub fn cap(&self) -> f64 {
        self.cap
    }

    /// Cap of the unit-scale law.
    pub fn unit_cap(&self) -> f64 {
        self.unit_cap
    }

    /// One untruncated draw from the unit-scale law.
    #[inline]
    pub fn sample_unit<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let c = &self.cms;
        if c.half {
            let z: f64 = rng.sample(StandardNormal);
            return 1.0 / (z * z);
        }
        let u: f64 = rng.sample(Open01);
        let w: f64 = rng.sample(Exp1);
        let v = PI * (u - 0.5);
        let shifted = v + FRAC_PI_2;
        let alpha = 1.0 / c.inv_alpha;
        let lead = (alpha * shifted).sin() / v.cos().powf(c.inv_alpha);
        let tail = ((v - alpha * shifted).cos() / w).powf(c.exponent);
        c.prefactor * lead * tail
    }

    /// Mean of the capped law, `∫₀^cap P(X > x) dx`; infinite when untruncated.
    pub fn truncated_mean(&self) -> f64 {
        if self.params.scale == 0.0 {
            return 0.0;
        }
        if !self.unit_cap.is_finite() {
            return f64::INFINITY;
        }
        let alpha = self.params.alpha;
        // integrate in log space: ∫ S(e^t) e^t dt, lower limit where S ≈ 1 contributes linearly
        let lower = self.unit_cap * 1e-9;
        let r = quad::integrate(
            |t: f64| {
                let x = t.exp();
                unit_survival(alpha, x) * x
            },
            lower.ln(),
            self.unit_cap.ln(),
            1e-300,
            1e-9,
        );
        self.params.scale * (r.value + lower)
    }
}

impl Distribution<f64> for OneSidedStable {
    #[inline]
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.params.scale == 0.0 {
            // keep the stream aligned with nonzero-scale runs
            let _ = self.sample_unit(rng);
            return 0.0;
        }
        let x = self.params.scale * self.sample_unit(rng);
        if x > self.cap {
            self.cap
        } else {
            x
        }
    }
}

/// Draws `count` capped one-sided stable variates from a ChaCha stream seeded with `seed`.
pub fn sample_one_sided_stable(params: StableParams, count: usize, seed: u64) -> Result<Vec<f64>> {
    let dist = OneSidedStable::new(params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count).map(|_| dist.sample(&mut rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn levy_cdf(c: f64, x: f64) -> f64 {
        statrs::function::erf::erfc((c / (2.0 * x)).sqrt())
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(StableParams::new(1.0, 1.0, 1.0).is_err());
        assert!(StableParams::new(0.0, 1.0, 1.0).is_err());
        assert!(StableParams::new(0.5, -1.0, 1.0).is_err());
        assert!(StableParams::new(0.5, 1.0, 0.0).is_err());
        assert!(StableParams::new(0.5, 1.0, 1.5).is_err());
        assert!(sample_one_sided_stable(StableParams { alpha: 1.2, scale: 1.0, truncation_quantile: 1.0 }, 3, 1).is_err());
    }

    #[test]
    fn zero_count_is_empty() {
        assert!(sample_one_sided_stable(StableParams::default(), 0, 1).unwrap().is_empty());
    }

    #[test]
    fn zero_scale_gives_zeros() {
        let p = StableParams::new(0.7, 0.0, 1.0).unwrap();
        let xs = sample_one_sided_stable(p, 100, 9).unwrap();
        assert_eq!(xs.len(), 100);
        assert!(xs.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn survival_matches_levy_closed_form() {
        for &x in &[0.05, 0.3, 1.0, 4.0, 50.0, 1e4, 1e9] {
            let s = unit_survival(0.5, x);
            let exact = 1.0 - levy_cdf(1.0, x);
            assert!((s - exact).abs() <= 1e-9 * exact.max(1e-3), "x={x}: {s} vs {exact}");
        }
    }

    #[test]
    fn quantile_inverts_survival() {
        for &alpha in &[0.3, 0.5, 0.8] {
            for &q in &[0.1, 0.5, 0.9, 0.999, 1.0 - 1e-6] {
                let x = unit_quantile(alpha, q).unwrap();
                let back = unit_cdf(alpha, x);
                assert!((back - q).abs() < 1e-9, "alpha={alpha} q={q}: {back}");
            }
        }
        assert!(unit_quantile(0.5, 1.0).unwrap().is_infinite());
    }

    #[test]
    fn levy_quantile_closed_form() {
        // median of Lévy(c=1): 1 / (2 erfc⁻¹(1/2)²) ≈ 2.198109
        let m = unit_quantile(0.5, 0.5).unwrap();
        assert!((m - 2.198_109_338_1).abs() < 1e-6, "{m}");
    }

    #[test]
    fn cms_matches_cdf_at_general_alpha() {
        let p = StableParams::new(0.7, 1.0, 1.0).unwrap();
        let mut xs = sample_one_sided_stable(p, 200_000, 17).unwrap();
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let mut worst: f64 = 0.0;
        for (i, &x) in xs.iter().enumerate().step_by(997) {
            let emp = (i as f64 + 0.5) / n;
            worst = worst.max((emp - unit_cdf(0.7, x)).abs());
        }
        assert!(worst < 0.006, "sup distance {worst}");
    }

    #[test]
    fn cap_applies() {
        let p = StableParams::new(0.5, 2.0, 0.9).unwrap();
        let d = OneSidedStable::new(p).unwrap();
        let xs = sample_one_sided_stable(p, 10_000, 3).unwrap();
        assert!(xs.iter().all(|&x| x <= d.cap()));
        let capped = xs.iter().filter(|&&x| x == d.cap()).count() as f64 / 1e4;
        assert!((capped - 0.1).abs() < 0.01, "{capped}");
    }

    #[test]
    fn truncated_mean_matches_sampling() {
        let p = StableParams::new(0.5, 1.5, 0.9).unwrap();
        let d = OneSidedStable::new(p).unwrap();
        let xs = sample_one_sided_stable(p, 400_000, 5).unwrap();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let exact = d.truncated_mean();
        assert!((m - exact).abs() / exact < 0.01, "{m} vs {exact}");
    }
}
