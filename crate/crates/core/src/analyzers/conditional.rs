use serde::{Deserialize, Serialize};
use serde_json::json;

use super::frame::SeriesFrame;
use super::stats::{self, Accumulator};
use super::Table;
use crate::error::{Error, Result};
use crate::Side;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalOptions {
    /// Conditioning bins with fewer samples are dropped and flagged.
    pub min_samples: usize,
    /// Log-spaced magnitude bins on each side of zero.
    pub magnitude_bins: usize,
    /// Fraction of each tail used by the Hill estimates.
    pub tail_fraction: f64,
}

impl Default for ConditionalOptions {
    fn default() -> Self {
        ConditionalOptions { min_samples: 1000, magnitude_bins: 40, tail_fraction: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalBin {
    pub n_lo: f64,
    pub n_hi: f64,
    pub count: usize,
    pub dropped: bool,
    /// Density of `Δn` per bin of `delta_edges`; empty when dropped.
    pub density: Vec<f64>,
    pub hill_positive: Option<f64>,
    pub hill_negative: Option<f64>,
}

/// `P(Δn | n)` at one lattice bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalDistribution {
    pub x: f64,
    pub side: Side,
    pub lag: f64,
    pub delta_edges: Vec<f64>,
    pub bins: Vec<ConditionalBin>,
}

/// Mirrored log-spaced edges: `−max … −min | −min, min | min … max`.
fn mirrored_edges(magnitudes: &[f64], bins: usize) -> Vec<f64> {
    let nonzero: Vec<f64> = stats::sorted(&magnitudes.iter().copied().filter(|m| *m > 0.0).collect::<Vec<_>>());
    if nonzero.is_empty() {
        return vec![-1.0, 1.0];
    }
    let hi = nonzero[nonzero.len() - 1] * (1.0 + 1e-12);
    let lo = stats::quantile_sorted(&nonzero, 1e-3).min(hi / 2.0);
    if !(hi > lo && lo > 0.0) {
        return vec![-hi, hi];
    }
    let pos = stats::log_edges(lo, hi, bins.max(1));
    let mut edges: Vec<f64> = pos.iter().rev().map(|e| -e).collect();
    edges.extend(pos);
    edges
}

pub fn conditional_delta_distribution(
    frame: &SeriesFrame,
    x: f64,
    side: Side,
    n_edges: &[f64],
    dt: f64,
    opts: &ConditionalOptions,
) -> Result<ConditionalDistribution> {
    if frame.is_empty() {
        return Err(Error::domain("empty frame"));
    }
    if n_edges.len() < 2 || n_edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("conditioning edges must be increasing with at least two entries"));
    }
    let lag = frame.lag_steps(dt)?;
    let bin = frame.bin_index(x)?;
    let pairs = frame.delta_pairs(bin, side, lag);
    if pairs.is_empty() {
        return Err(Error::domain("frame has no samples at this lag"));
    }
    let magnitudes: Vec<f64> = pairs.iter().map(|p| p.1.abs()).collect();
    let delta_edges = mirrored_edges(&magnitudes, opts.magnitude_bins);

    let mut groups: Vec<Vec<f64>> = vec![Vec::new(); n_edges.len() - 1];
    for &(n, d) in &pairs {
        if let Some(b) = stats::bin_of(n_edges, n) {
            groups[b].push(d);
        }
    }
    let bins = groups
        .into_iter()
        .enumerate()
        .map(|(b, deltas)| {
            let count = deltas.len();
            let dropped = count < opts.min_samples.max(1);
            let mut density = Vec::new();
            let (mut hp, mut hn) = (None, None);
            if !dropped {
                let mut counts = vec![0usize; delta_edges.len() - 1];
                for &d in &deltas {
                    if let Some(k) = stats::bin_of(&delta_edges, d) {
                        counts[k] += 1;
                    }
                }
                density = counts
                    .iter()
                    .enumerate()
                    .map(|(k, &c)| c as f64 / (count as f64 * (delta_edges[k + 1] - delta_edges[k])))
                    .collect();
                let pos: Vec<f64> = deltas.iter().copied().filter(|d| *d > 0.0).collect();
                let neg: Vec<f64> = deltas.iter().copied().filter(|d| *d < 0.0).collect();
                hp = stats::hill_tail_index(&pos, opts.tail_fraction);
                hn = stats::hill_tail_index(&neg, opts.tail_fraction);
            }
            ConditionalBin {
                n_lo: n_edges[b],
                n_hi: n_edges[b + 1],
                count,
                dropped,
                density,
                hill_positive: hp,
                hill_negative: hn,
            }
        })
        .collect();
    Ok(ConditionalDistribution { x: frame.x[bin], side, lag: dt, delta_edges, bins })
}

impl ConditionalDistribution {
    /// CDF of the histogram at each delta edge for conditioning bin `b`.
    pub fn edge_cdf(&self, b: usize) -> Vec<f64> {
        let bin = &self.bins[b];
        let mut out = vec![0.0];
        let mut acc = 0.0;
        for (k, d) in bin.density.iter().enumerate() {
            acc += d * (self.delta_edges[k + 1] - self.delta_edges[k]);
            out.push(acc);
        }
        out
    }

    pub fn to_table(&self) -> Table {
        let mut rows = Vec::new();
        for b in &self.bins {
            if b.dropped {
                continue;
            }
            for (k, d) in b.density.iter().enumerate() {
                rows.push(vec![b.n_lo, b.n_hi, self.delta_edges[k], self.delta_edges[k + 1], *d]);
            }
        }
        let dropped: Vec<[f64; 2]> = self.bins.iter().filter(|b| b.dropped).map(|b| [b.n_lo, b.n_hi]).collect();
        let hill: Vec<_> = self
            .bins
            .iter()
            .map(|b| json!({"n_lo": b.n_lo, "n_hi": b.n_hi, "count": b.count, "hill_positive": b.hill_positive, "hill_negative": b.hill_negative}))
            .collect();
        Table {
            meta: json!({
                "statistic": "conditional",
                "x": self.x,
                "side": self.side.name(),
                "lag": self.lag,
                "delta_edges": self.delta_edges,
                "n_edges": self.bins.iter().map(|b| b.n_lo).chain(self.bins.last().map(|b| b.n_hi)).collect::<Vec<_>>(),
                "dropped_bins": dropped,
                "bins": hill,
            }),
            columns: ["n_lo", "n_hi", "delta_lo", "delta_hi", "density"].map(String::from).to_vec(),
            rows,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanDeltaOptions {
    pub bins: usize,
    /// Bins with fewer samples are left out of the fit.
    pub min_count: usize,
    pub log_bins: bool,
}

impl Default for MeanDeltaOptions {
    fn default() -> Self {
        MeanDeltaOptions { bins: 20, min_count: 30, log_bins: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanDeltaBin {
    pub n_lo: f64,
    pub n_hi: f64,
    pub n_mean: f64,
    pub delta_mean: f64,
    pub delta_se: f64,
    pub count: usize,
}

/// Affine fit of `⟨Δn⟩` against `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanDeltaFit {
    pub x: f64,
    pub side: Side,
    pub lag: f64,
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
    pub bins: Vec<MeanDeltaBin>,
    pub samples: usize,
}

pub fn mean_delta_vs_n(
    frame: &SeriesFrame,
    x: f64,
    side: Side,
    dt: f64,
    opts: &MeanDeltaOptions,
) -> Result<MeanDeltaFit> {
    if frame.is_empty() {
        return Err(Error::domain("empty frame"));
    }
    let lag = frame.lag_steps(dt)?;
    let bin = frame.bin_index(x)?;
    let pairs = frame.delta_pairs(bin, side, lag);
    mean_delta_from_pairs(&pairs, opts).map(|(fit_bins, fit)| MeanDeltaFit {
        x: frame.x[bin],
        side,
        lag: dt,
        slope: fit.slope,
        intercept: fit.intercept,
        slope_se: fit.slope_se,
        intercept_se: fit.intercept_se,
        bins: fit_bins,
        samples: pairs.len(),
    })
}

/// Binned weighted fit of `Δn` against `n` from raw `(n, Δn)` pairs.
pub fn mean_delta_from_pairs(pairs: &[(f64, f64)], opts: &MeanDeltaOptions) -> Result<(Vec<MeanDeltaBin>, stats::LineFit)> {
    let ns: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let positive = stats::sorted(&ns.iter().copied().filter(|n| *n > 0.0).collect::<Vec<_>>());
    let all = stats::sorted(&ns);
    if all.is_empty() {
        return Err(Error::domain("no samples"));
    }
    let bins = opts.bins.max(3);
    let edges = if opts.log_bins && positive.len() > 1 {
        let lo = stats::quantile_sorted(&positive, 1e-3);
        let hi = stats::quantile_sorted(&positive, 1.0 - 1e-3);
        if hi > lo {
            stats::log_edges(lo, hi, bins)
        } else {
            vec![lo, hi]
        }
    } else {
        let lo = stats::quantile_sorted(&all, 1e-3);
        let hi = stats::quantile_sorted(&all, 1.0 - 1e-3);
        if hi > lo {
            stats::linear_edges(lo, hi, bins)
        } else {
            vec![lo, hi]
        }
    };
    if edges.len() < 4 {
        return Err(Error::domain("fewer than 3 occupied n bins"));
    }
    let nb = edges.len() - 1;
    let mut n_acc = vec![Accumulator::default(); nb];
    let mut d_acc = vec![Accumulator::default(); nb];
    for &(n, d) in pairs {
        // clip outliers into the end bins; each bin's own mean n keeps the relation affine
        let b = stats::bin_of(&edges, n).unwrap_or(if n < edges[0] { 0 } else { nb - 1 });
        n_acc[b].push(n);
        d_acc[b].push(d);
    }
    let fit_bins: Vec<MeanDeltaBin> = (0..nb)
        .filter(|&b| d_acc[b].count >= opts.min_count.max(2))
        .map(|b| MeanDeltaBin {
            n_lo: edges[b],
            n_hi: edges[b + 1],
            n_mean: n_acc[b].mean,
            delta_mean: d_acc[b].mean,
            delta_se: d_acc[b].std_error(),
            count: d_acc[b].count,
        })
        .collect();
    if fit_bins.len() < 3 {
        return Err(Error::domain(format!("only {} n bins have enough samples; need 3", fit_bins.len())));
    }
    let xs: Vec<f64> = fit_bins.iter().map(|b| b.n_mean).collect();
    let ys: Vec<f64> = fit_bins.iter().map(|b| b.delta_mean).collect();
    let fit = if fit_bins.iter().all(|b| b.delta_se > 0.0) {
        let w: Vec<f64> = fit_bins.iter().map(|b| 1.0 / (b.delta_se * b.delta_se)).collect();
        stats::weighted_line_fit(&xs, &ys, &w, true)?
    } else {
        stats::line_fit(&xs, &ys)?
    };
    Ok((fit_bins, fit))
}

impl MeanDeltaFit {
    pub fn to_table(&self) -> Table {
        Table {
            meta: json!({
                "statistic": "mean_delta",
                "x": self.x,
                "side": self.side.name(),
                "lag": self.lag,
                "slope": self.slope,
                "slope_se": self.slope_se,
                "intercept": self.intercept,
                "intercept_se": self.intercept_se,
                "samples": self.samples,
                "n_edges": self.bins.iter().map(|b| [b.n_lo, b.n_hi]).collect::<Vec<_>>(),
            }),
            columns: ["n_lo", "n_hi", "n_mean", "delta_mean", "delta_se", "count"].map(String::from).to_vec(),
            rows: self
                .bins
                .iter()
                .map(|b| vec![b.n_lo, b.n_hi, b.n_mean, b.delta_mean, b.delta_se, b.count as f64])
                .collect(),
        }
    }
}
