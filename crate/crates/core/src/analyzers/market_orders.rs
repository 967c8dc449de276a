use serde_json::json;

use super::fit::{self, FitReport, LmOptions};
use super::stats;
use super::Table;
use crate::error::{Error, Result};

/// Minimum number of `(v, flow)` pairs accepted by the market-order fit.
pub const MIN_FIT_SAMPLES: usize = 1000;

#[inline]
fn sech(z: f64) -> f64 {
    1.0 / z.cosh()
}

/// `[s k0 tanh(v/v0) + k_inf − k1 sech(v/v0)] v0` clamped at 0, with `s = ±1`.
#[inline]
fn flow(v: f64, sign: f64, k0: f64, k_inf: f64, k1: f64, v0: f64) -> f64 {
    let z = v / v0;
    ((sign * k0 * z.tanh() + k_inf - k1 * sech(z)) * v0).max(0.0)
}

/// Linear least squares for `(k0, k_inf, k1)` at a fixed `v0`, ignoring the clamp.
fn linear_start(v: &[f64], buy: &[f64], sell: &[f64], v0: f64) -> [f64; 3] {
    // buy − sell = 2 k0 v0 tanh, buy + sell = 2 (k_inf − k1 sech) v0
    let (mut stt, mut stj) = (0.0, 0.0);
    let (mut xs, mut ys) = (Vec::with_capacity(v.len()), Vec::with_capacity(v.len()));
    for i in 0..v.len() {
        let z = v[i] / v0;
        let t = z.tanh();
        stt += t * t;
        stj += t * (buy[i] - sell[i]) / (2.0 * v0);
        xs.push(sech(z));
        ys.push((buy[i] + sell[i]) / (2.0 * v0));
    }
    let k0 = if stt > 0.0 { (stj / stt).abs() } else { 0.0 };
    let (k_inf, k1) = match stats::line_fit(&xs, &ys) {
        Ok(f) => (f.intercept.max(0.0), (-f.slope).max(0.0)),
        Err(_) => (stats::mean(&ys).max(0.0), 0.0),
    };
    [k0, k_inf.max(k1), k1]
}

/// Joint nonlinear fit of the buy and sell flows to the market-order law.
///
/// Reports `k0`, `k_inf`, `k1`, `v0`. When boundary volumes are supplied the report carries the
/// diagnostic `k0_over_mean_n0`.
pub fn fit_market_order_response(
    v: &[f64],
    buy: &[f64],
    sell: &[f64],
    n0s: Option<&[f64]>,
    opts: &LmOptions,
) -> Result<FitReport> {
    let n = v.len();
    if buy.len() != n || sell.len() != n {
        return Err(Error::domain("velocity and flow series differ in length"));
    }
    if n < MIN_FIT_SAMPLES {
        return Err(Error::domain(format!("need at least {MIN_FIT_SAMPLES} (v, flow) pairs, got {n}")));
    }
    let abs_sorted = stats::sorted(&v.iter().map(|x| x.abs()).collect::<Vec<_>>());
    let v_max = abs_sorted[n - 1];
    if !(v_max > 0.0) {
        return Err(Error::domain("velocities are all zero"));
    }
    let residuals = |p: &[f64]| -> Vec<f64> {
        let v0 = p[3].exp();
        let mut r = Vec::with_capacity(2 * n);
        for i in 0..n {
            r.push(flow(v[i], 1.0, p[0], p[1], p[2], v0) - buy[i]);
            r.push(flow(v[i], -1.0, p[0], p[1], p[2], v0) - sell[i]);
        }
        r
    };
    // scan a few v0 candidates for the linear start and keep the best
    let median = stats::quantile_sorted(&abs_sorted, 0.5).max(v_max * 1e-3);
    let mut start = None;
    let mut best_rss = f64::INFINITY;
    for f in [0.25, 0.5, 1.0, 2.0, 4.0] {
        let v0 = median * f;
        let k = linear_start(v, buy, sell, v0);
        let p = [k[0], k[1], k[2], v0.ln()];
        let rss: f64 = residuals(&p).iter().map(|x| x * x).sum();
        if rss < best_rss {
            best_rss = rss;
            start = Some(p);
        }
    }
    let start = start.ok_or_else(|| Error::numeric("no finite starting point"))?;
    // flows reproduced to ten digits count as exact
    let scale: f64 = buy.iter().chain(sell).map(|x| x * x).sum();
    let opts = LmOptions { rss_floor: opts.rss_floor.max(1e-20 * scale), ..*opts };
    let out = fit::multi_start(&residuals, &start, &[false, false, false, true], &opts)?;
    let mut report = FitReport::from_outcome(
        &["k0", "k_inf", "k1", "v0"],
        &out,
        &[fit::identity, fit::identity, fit::identity, fit::exp_transform],
        n,
    );
    let v0 = out.x[3].exp();
    report.diagnostics.insert("velocity_span_over_v0".into(), v_max / v0);
    if let Some(c) = &out.covariance_unscaled {
        // large when the data pin down only combinations of the parameters
        let d: Vec<f64> = (0..4).map(|i| c[(i, i)].sqrt()).collect();
        let corr = nalgebra::DMatrix::from_fn(4, 4, |i, j| c[(i, j)] / (d[i] * d[j]));
        let eig = corr.symmetric_eigenvalues();
        let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), &e| (lo.min(e), hi.max(e)));
        if lo > 0.0 && hi.is_finite() {
            report.diagnostics.insert("correlation_condition".into(), hi / lo);
        }
    }
    if let Some(n0) = n0s {
        let m = stats::mean(n0);
        if m > 0.0 {
            report.diagnostics.insert("k0_over_mean_n0".into(), out.x[0] / m);
        }
    }
    Ok(report)
}

/// Odd-symmetry residual of the binned imbalance `J = buy − sell`:
/// `‖J̄(v) + J̄(−v)‖ / ‖J̄(v) − J̄(−v)‖` over mirrored bin pairs.
pub fn imbalance_symmetry_residual(v: &[f64], buy: &[f64], sell: &[f64], bins_per_side: usize) -> Result<f64> {
    if v.is_empty() || buy.len() != v.len() || sell.len() != v.len() {
        return Err(Error::domain("need equal, nonempty series"));
    }
    // bin by |v| so that mirrored bins are exact mirrors
    let v_max = v.iter().fold(0.0_f64, |m, x| m.max(x.abs())) * (1.0 + 1e-12);
    let edges = stats::linear_edges(0.0, v_max, bins_per_side.max(1));
    let nb = edges.len() - 1;
    let mut pos = vec![stats::Accumulator::default(); nb];
    let mut neg = vec![stats::Accumulator::default(); nb];
    for i in 0..v.len() {
        if v[i] == 0.0 {
            continue;
        }
        if let Some(b) = stats::bin_of(&edges, v[i].abs()) {
            let j = buy[i] - sell[i];
            if v[i] > 0.0 {
                pos[b].push(j);
            } else {
                neg[b].push(j);
            }
        }
    }
    let (mut even, mut odd) = (0.0, 0.0);
    for b in 0..nb {
        if pos[b].count < 10 || neg[b].count < 10 {
            continue;
        }
        even += (pos[b].mean + neg[b].mean).powi(2);
        odd += (pos[b].mean - neg[b].mean).powi(2);
    }
    if !(odd > 0.0) {
        return Err(Error::numeric("imbalance has no odd component"));
    }
    Ok((even / odd).sqrt())
}

/// Fits `a·s·tanh(v/v0) + b − c·sech(v/v0)` (the activity form, `s = ±1`) to a curve such as
/// rms `Δn` against velocity. Reports `a`, `b`, `c`, `v0`.
pub fn fit_activity_curve(v: &[f64], y: &[f64], sign: f64, opts: &LmOptions) -> Result<FitReport> {
    let n = v.len();
    if n < 5 || y.len() != n {
        return Err(Error::domain("need at least five aligned points"));
    }
    let residuals = |p: &[f64]| -> Vec<f64> {
        let v0 = p[3].exp();
        (0..n)
            .map(|i| {
                let z = v[i] / v0;
                sign * p[0] * z.tanh() + p[1] - p[2] * sech(z) - y[i]
            })
            .collect()
    };
    let abs_sorted = stats::sorted(&v.iter().map(|x| x.abs()).collect::<Vec<_>>());
    let v_scale = stats::quantile_sorted(&abs_sorted, 0.5).max(abs_sorted[n - 1] * 1e-3);
    let y_max = y.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let mut start = [0.1 * y_max, y_max, 0.1 * y_max, v_scale.ln()];
    let mut best = f64::INFINITY;
    for f in [0.25, 0.5, 1.0, 2.0, 4.0] {
        let p = [0.1 * y_max, y_max, 0.1 * y_max, (v_scale * f).ln()];
        let out = fit::levenberg_marquardt(&residuals, &p, &LmOptions { max_iterations: 50, ..*opts });
        if out.rss < best {
            best = out.rss;
            start = [out.x[0], out.x[1], out.x[2], out.x[3]];
        }
    }
    let out = fit::multi_start(&residuals, &start, &[false, false, false, true], opts)?;
    Ok(FitReport::from_outcome(
        &["a", "b", "c", "v0"],
        &out,
        &[fit::identity, fit::identity, fit::identity, fit::exp_transform],
        n,
    ))
}

pub fn fit_table(report: &FitReport) -> Table {
    Table {
        meta: json!({
            "statistic": "fit",
            "parameters": report.parameters.iter().map(|p| p.name.clone()).collect::<Vec<_>>(),
            "residual_norm": report.residual_norm,
            "samples": report.samples,
            "iterations": report.iterations,
            "diagnostics": report.diagnostics,
        }),
        columns: vec!["estimate".into(), "std_error".into()],
        rows: report.parameters.iter().map(|p| vec![p.estimate, p.std_error]).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (k0, k_inf, k1, v0) = (2.0, 3.0, 2.5, 0.01);
        let v: Vec<f64> = (0..n).map(|i| -0.04 + 0.08 * i as f64 / (n - 1) as f64).collect();
        let buy = v.iter().map(|&x| flow(x, 1.0, k0, k_inf, k1, v0)).collect();
        let sell = v.iter().map(|&x| flow(x, -1.0, k0, k_inf, k1, v0)).collect();
        (v, buy, sell)
    }

    #[test]
    fn noiseless_recovery() {
        let (v, b, s) = synthetic(2001);
        let r = fit_market_order_response(&v, &b, &s, None, &LmOptions::default()).unwrap();
        for (name, truth) in [("k0", 2.0), ("k_inf", 3.0), ("k1", 2.5), ("v0", 0.01)] {
            let e = r.estimate(name).unwrap();
            assert!((e / truth - 1.0).abs() < 1e-6, "{name}: {e}");
        }
    }

    #[test]
    fn too_few_samples() {
        let (v, b, s) = synthetic(100);
        assert!(matches!(fit_market_order_response(&v, &b, &s, None, &LmOptions::default()), Err(Error::Domain(_))));
    }

    #[test]
    fn exact_imbalance_is_odd() {
        let (v, b, s) = synthetic(2001);
        assert!(imbalance_symmetry_residual(&v, &b, &s, 20).unwrap() < 1e-12);
    }
}
