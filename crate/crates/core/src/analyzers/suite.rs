//! Runs named statistics over a frame and stacks the per-bin results into one table each.

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::conditional::{conditional_delta_distribution, mean_delta_vs_n, ConditionalOptions, MeanDeltaOptions};
use super::correlation::{spatial_correlation, velocity_volume_correlation};
use super::fit::LmOptions;
use super::frame::SeriesFrame;
use super::market_orders::{fit_market_order_response, fit_table};
use super::returns::{return_distribution, rms_delta_vs_velocity, variance_table, variance_vs_n0, ReturnOptions};
use super::{stats, Table, STATISTICS};
use crate::error::{Error, Result};
use crate::Side;

/// Binning and estimator settings shared by every statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteOptions {
    /// Velocity relaxation time used to turn velocities into returns.
    pub tau: f64,
    /// Lag of `Δn`; the frame cadence when `None`.
    pub lag: Option<f64>,
    /// Log distances analysed by the per-bin statistics; a spread of stored bins when empty.
    pub x: Vec<f64>,
    /// Reference bin of the spatial correlation; the middle stored bin when `None`.
    pub x_ref: Option<f64>,
    /// Quantile bins of `n` for the conditional distribution.
    pub n_bins: usize,
    pub n0_bins: usize,
    pub v_bins: usize,
    pub returns: ReturnOptions,
    pub conditional: ConditionalOptions,
    pub mean_delta: MeanDeltaOptions,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            tau: 1.0,
            lag: None,
            x: Vec::new(),
            x_ref: None,
            n_bins: 5,
            n0_bins: 10,
            v_bins: 20,
            returns: ReturnOptions::default(),
            conditional: ConditionalOptions::default(),
            mean_delta: MeanDeltaOptions::default(),
        }
    }
}

/// Resolves a statistic selection. An empty list selects every statistic.
pub fn parse_selection<S: AsRef<str>>(names: &[S]) -> Result<Vec<&'static str>> {
    if names.is_empty() {
        return Ok(STATISTICS.to_vec());
    }
    let mut out = Vec::new();
    for n in names {
        let n = n.as_ref();
        match STATISTICS.iter().find(|s| **s == n) {
            Some(s) if !out.contains(s) => out.push(*s),
            Some(_) => {}
            None => {
                return Err(Error::domain(format!(
                    "unknown statistic '{n}'; valid names: {}",
                    STATISTICS.join(", ")
                )))
            }
        }
    }
    Ok(out)
}

fn default_x(frame: &SeriesFrame) -> Vec<f64> {
    let b = frame.bins();
    let mut idx = vec![1.min(b - 1), b / 4, b / 2, (3 * b) / 4];
    idx.sort_unstable();
    idx.dedup();
    idx.into_iter().map(|i| frame.x[i]).collect()
}

/// Prepends `bin_x` and `side` (`+1` bid, `−1` ask) columns and merges the parts.
fn stack(name: &str, parts: Vec<(f64, Side, Table)>) -> Result<Table> {
    let first = parts.first().ok_or_else(|| Error::domain(format!("{name}: nothing to stack")))?;
    let mut columns = vec!["bin_x".to_string(), "side".to_string()];
    columns.extend(first.2.columns.iter().cloned());
    let mut rows = Vec::new();
    let mut metas = Vec::new();
    for (x, side, t) in parts {
        for r in t.rows {
            let mut row = vec![x, side.sign()];
            row.extend(r);
            rows.push(row);
        }
        metas.push(t.meta);
    }
    Ok(Table { meta: json!({"statistic": name, "parts": metas}), columns, rows })
}

fn quantile_edges(values: &[f64], bins: usize) -> Vec<f64> {
    let s = stats::sorted(values);
    let mut e: Vec<f64> = (0..=bins).map(|k| stats::quantile_sorted(&s, k as f64 / bins as f64)).collect();
    e.dedup_by(|b, a| !(*b > *a));
    if let Some(last) = e.last_mut() {
        *last = last.next_up();
    }
    e
}

/// Computes one statistic. `lag` defaults to the frame cadence.
pub fn run_statistic(name: &str, frame: &SeriesFrame, opts: &SuiteOptions) -> Result<Table> {
    if frame.is_empty() || frame.bins() == 0 {
        return Err(Error::domain("empty frame"));
    }
    let dt = opts.lag.unwrap_or(frame.cadence);
    let xs = if opts.x.is_empty() { default_x(frame) } else { opts.x.clone() };
    match name {
        "conditional" => {
            let mut parts = Vec::new();
            for &x in &xs {
                let b = frame.bin_index(x)?;
                for side in Side::BOTH {
                    let edges = quantile_edges(&frame.side(side)[b], opts.n_bins);
                    if edges.len() < 2 {
                        continue;
                    }
                    let d = conditional_delta_distribution(frame, x, side, &edges, dt, &opts.conditional)?;
                    parts.push((frame.x[b], side, d.to_table()));
                }
            }
            stack(name, parts)
        }
        "mean_delta" => {
            let mut parts = Vec::new();
            for &x in &xs {
                for side in Side::BOTH {
                    let f = mean_delta_vs_n(frame, x, side, dt, &opts.mean_delta)?;
                    parts.push((f.x, side, f.to_table()));
                }
            }
            stack(name, parts)
        }
        "spatial_correlation" => {
            let x_ref = opts.x_ref.unwrap_or(frame.x[frame.bins() / 2]);
            let mut parts = Vec::new();
            for side in Side::BOTH {
                let c = spatial_correlation(frame, x_ref, side, dt)?;
                parts.push((c.x_ref, side, c.to_table()));
            }
            stack(name, parts)
        }
        "returns" => Ok(return_distribution(&frame.velocities, opts.tau, &opts.returns)?.to_table()),
        "variance_vs_n0" => {
            let positive: Vec<f64> = frame.n0s.iter().copied().filter(|n| *n > 0.0).collect();
            if positive.is_empty() {
                return Err(Error::domain("boundary volume is never positive"));
            }
            let s = stats::sorted(&positive);
            let (lo, hi) = (stats::quantile_sorted(&s, 0.005), stats::quantile_sorted(&s, 0.995));
            let edges = if hi > lo { stats::log_edges(lo, hi, opts.n0_bins) } else { vec![lo * 0.99, lo * 1.01] };
            Ok(variance_table(&variance_vs_n0(&frame.velocities, &frame.n0s, &edges)?))
        }
        "velocity_volume_correlation" => Ok(velocity_volume_correlation(frame, dt)?.to_table()),
        "rms_vs_velocity" => {
            let s = stats::sorted(&frame.velocities.iter().map(|v| v.abs()).collect::<Vec<_>>());
            let hi = stats::quantile_sorted(&s, 0.99);
            if !(hi > 0.0) {
                return Err(Error::domain("velocities are all zero"));
            }
            let edges = stats::linear_edges(-hi, hi, opts.v_bins);
            Ok(rms_delta_vs_velocity(frame, &edges, dt)?.to_table())
        }
        "market_order_fit" => {
            let (v, buy, sell, n0) = frame.market_order_pairs()?;
            let r = fit_market_order_response(&v, &buy, &sell, Some(&n0), &LmOptions::default())?;
            let mut t = fit_table(&r);
            t.meta["statistic"] = name.into();
            Ok(t)
        }
        other => Err(Error::domain(format!("unknown statistic '{other}'; valid names: {}", STATISTICS.join(", ")))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection() {
        assert_eq!(parse_selection::<&str>(&[]).unwrap().len(), STATISTICS.len());
        assert_eq!(parse_selection(&["returns", "returns"]).unwrap(), vec!["returns"]);
        let e = parse_selection(&["bogus"]).unwrap_err().to_string();
        assert!(e.contains("bogus") && e.contains("mean_delta"));
    }

    #[test]
    fn stacked_columns() {
        let mut f = SeriesFrame::empty(vec![0.0, 0.1, 0.2, 0.3], 1.0);
        for k in 0..200 {
            let a = ((k * 7) % 5) as f64;
            let b = ((k * 3) % 4) as f64;
            f.push(k as f64, 0, &[a, b, a + b, 1.0 + a], &[b, a, 2.0, b], 0.0, a + b);
        }
        let t = run_statistic("spatial_correlation", &f, &SuiteOptions::default()).unwrap();
        assert_eq!(t.columns, ["bin_x", "side", "x", "correlation"]);
        assert_eq!(t.rows.len(), 8);
    }

    #[test]
    fn market_order_fit_pairs_flows_with_the_driving_velocity() {
        let spec = crate::presets::contrast_cf();
        let mut sim = spec.simulation(3).unwrap();
        let f = crate::analyzers::record_frame(&mut sim, 5000, vec![0, 1, 2, 3], 1).unwrap();
        let t = run_statistic("market_order_fit", &f, &SuiteOptions::default()).unwrap();
        let est = t.column("estimate").unwrap();
        let mo = spec.params.mo;
        for (e, truth) in est.iter().zip([mo.k0, mo.k_inf, mo.k1, mo.v0]) {
            assert!((e - truth).abs() <= 1e-6 * truth.max(1.0), "{e} vs {truth}");
        }
    }
}
