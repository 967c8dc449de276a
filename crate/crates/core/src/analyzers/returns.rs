use serde::{Deserialize, Serialize};
use serde_json::json;

use super::frame::SeriesFrame;
use super::stats::{self, Accumulator};
use super::Table;
use crate::error::{Error, Result};
use crate::Side;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReturnOptions {
    /// Fraction of the largest `|r|` used by the Hill estimator.
    pub top_fraction: f64,
    pub bins: usize,
    /// Below this many samples no tail exponent is reported.
    pub min_samples: usize,
    /// Largest tolerated gap between the Hill and log-log pdf exponents.
    pub max_disagreement: f64,
}

impl Default for ReturnOptions {
    fn default() -> Self {
        ReturnOptions { top_fraction: 0.01, bins: 60, min_samples: 100_000, max_disagreement: 0.5 }
    }
}

pub const FLAG_INSUFFICIENT: &str = "insufficient samples";
pub const FLAG_NO_WINDOW: &str = "no stable power-law window";
pub const FLAG_DISAGREE: &str = "Hill and log-log estimates disagree";

/// Density of normalized absolute returns `|v τ| / std` with tail estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnDistribution {
    pub samples: usize,
    /// Standard deviation of `v τ` used for normalization.
    pub std: f64,
    pub edges: Vec<f64>,
    pub density: Vec<f64>,
    /// Hill ccdf tail index over the top fraction.
    pub hill_ccdf_index: Option<f64>,
    /// `hill_ccdf_index + 1`.
    pub pdf_exponent: Option<f64>,
    /// Negative log-log slope of the histogram over the Hill window.
    pub ols_pdf_exponent: Option<f64>,
    /// Lower edge of the tail window in normalized units.
    pub tail_threshold: Option<f64>,
    pub flags: Vec<String>,
}

pub fn return_distribution(velocities: &[f64], tau: f64, opts: &ReturnOptions) -> Result<ReturnDistribution> {
    let n = velocities.len();
    if n < 2 {
        return Err(Error::domain("need at least two velocity samples"));
    }
    let r: Vec<f64> = velocities.iter().map(|v| v * tau).collect();
    let std = stats::variance(&r).sqrt();
    if !(std > 0.0) {
        return Err(Error::domain("returns have zero variance"));
    }
    let mut a: Vec<f64> = r.iter().map(|x| (x / std).abs()).collect();
    a.sort_by(|x, y| y.total_cmp(x));
    let positive: Vec<f64> = a.iter().copied().filter(|x| *x > 0.0).collect();
    let (lo, hi) = (positive.last().copied().unwrap_or(1e-12), a[0] * (1.0 + 1e-12));
    let edges = if hi > lo {
        let mut e = stats::log_edges(lo, hi, opts.bins.max(2));
        let last = e.len() - 1;
        e[0] = if positive.len() < n { 0.0 } else { lo };
        e[last] = hi;
        e
    } else {
        vec![0.0, hi.max(1.0)]
    };
    let mut counts = vec![0usize; edges.len() - 1];
    for &x in &a {
        if let Some(b) = stats::bin_of(&edges, x) {
            counts[b] += 1;
        }
    }
    let density: Vec<f64> =
        counts.iter().enumerate().map(|(b, &c)| c as f64 / (n as f64 * (edges[b + 1] - edges[b]))).collect();

    let mut flags = Vec::new();
    let (mut hill, mut pdf, mut ols, mut threshold) = (None, None, None, None);
    if n < opts.min_samples {
        flags.push(FLAG_INSUFFICIENT.to_string());
    } else {
        let k = ((opts.top_fraction * n as f64).round() as usize).max(10);
        hill = stats::hill_from_descending(&a, k);
        threshold = Some(a[k]);
        let deep = stats::hill_from_descending(&a, (k / 4).max(10));
        if let (Some(h), Some(d)) = (hill, deep) {
            if (d - h).abs() > 0.2 * h {
                flags.push(FLAG_NO_WINDOW.to_string());
            }
        }
        pdf = hill.map(|h| h + 1.0);
        // log-log cross-check on a histogram restricted to the Hill window
        let t = a[k];
        let wedges = stats::log_edges(t, a[0] * (1.0 + 1e-12), 12);
        let mut wc = vec![0usize; wedges.len() - 1];
        for &x in &a[..k] {
            if let Some(b) = stats::bin_of(&wedges, x) {
                wc[b] += 1;
            }
        }
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for b in 0..wc.len() {
            if wc[b] >= 5 {
                xs.push((wedges[b] * wedges[b + 1]).sqrt());
                ys.push(wc[b] as f64 / (wedges[b + 1] - wedges[b]));
            }
        }
        if xs.len() >= 3 {
            ols = stats::loglog_fit(&xs, &ys).ok().map(|f| -f.slope);
        }
        if let (Some(p), Some(o)) = (pdf, ols) {
            if (p - o).abs() > opts.max_disagreement {
                flags.push(FLAG_DISAGREE.to_string());
            }
        }
    }
    Ok(ReturnDistribution {
        samples: n,
        std,
        edges,
        density,
        hill_ccdf_index: hill,
        pdf_exponent: pdf,
        ols_pdf_exponent: ols,
        tail_threshold: threshold,
        flags,
    })
}

impl ReturnDistribution {
    pub fn flagged(&self, flag: &str) -> bool {
        self.flags.iter().any(|f| f == flag)
    }

    pub fn to_table(&self) -> Table {
        Table {
            meta: json!({
                "statistic": "returns",
                "normalization": "std",
                "samples": self.samples,
                "std": self.std,
                "hill_ccdf_index": self.hill_ccdf_index,
                "pdf_exponent": self.pdf_exponent,
                "ols_pdf_exponent": self.ols_pdf_exponent,
                "tail_threshold": self.tail_threshold,
                "flags": self.flags,
                "edges": self.edges,
            }),
            columns: vec!["r_lo".into(), "r_hi".into(), "density".into()],
            rows: (0..self.density.len()).map(|b| vec![self.edges[b], self.edges[b + 1], self.density[b]]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceBin {
    pub n0_lo: f64,
    pub n0_hi: f64,
    pub n0_mean: f64,
    pub v2_mean: f64,
    pub v2_se: f64,
    pub count: usize,
}

/// `⟨v²⟩` per boundary-volume bin from aligned slices.
pub fn variance_vs_n0(velocities: &[f64], n0s: &[f64], n0_edges: &[f64]) -> Result<Vec<VarianceBin>> {
    if velocities.is_empty() || velocities.len() != n0s.len() {
        return Err(Error::domain("need equal, nonempty velocity and n0 series"));
    }
    if n0_edges.len() < 2 {
        return Err(Error::domain("need at least one n0 bin"));
    }
    let nb = n0_edges.len() - 1;
    let mut n_acc = vec![Accumulator::default(); nb];
    let mut v_acc = vec![Accumulator::default(); nb];
    for (&v, &n0) in velocities.iter().zip(n0s) {
        if let Some(b) = stats::bin_of(n0_edges, n0) {
            n_acc[b].push(n0);
            v_acc[b].push(v * v);
        }
    }
    Ok((0..nb)
        .map(|b| VarianceBin {
            n0_lo: n0_edges[b],
            n0_hi: n0_edges[b + 1],
            n0_mean: n_acc[b].mean,
            v2_mean: v_acc[b].mean,
            v2_se: v_acc[b].std_error(),
            count: v_acc[b].count,
        })
        .collect())
}

pub fn velocity_variance_vs_n0(frame: &SeriesFrame, n0_edges: &[f64]) -> Result<Vec<VarianceBin>> {
    if frame.is_empty() {
        return Err(Error::domain("empty frame"));
    }
    variance_vs_n0(&frame.velocities, &frame.n0s, n0_edges)
}

pub fn variance_table(bins: &[VarianceBin]) -> Table {
    Table {
        meta: json!({"statistic": "variance_vs_n0", "n0_edges": bins.iter().map(|b| [b.n0_lo, b.n0_hi]).collect::<Vec<_>>()}),
        columns: ["n0_lo", "n0_hi", "n0_mean", "v2_mean", "v2_se", "count"].map(String::from).to_vec(),
        rows: bins.iter().map(|b| vec![b.n0_lo, b.n0_hi, b.n0_mean, b.v2_mean, b.v2_se, b.count as f64]).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmsBin {
    pub v_lo: f64,
    pub v_hi: f64,
    pub count: usize,
    pub mean_square: f64,
}

impl RmsBin {
    pub fn rms(&self) -> f64 {
        self.mean_square.sqrt()
    }
}

/// `⟨Δn²⟩^(1/2)` per velocity bin and side, pooled over the frame's stored bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmsCurve {
    pub lag: f64,
    pub v_edges: Vec<f64>,
    pub bid: Vec<RmsBin>,
    pub ask: Vec<RmsBin>,
}

pub fn rms_delta_vs_velocity(frame: &SeriesFrame, v_edges: &[f64], dt: f64) -> Result<RmsCurve> {
    if frame.is_empty() {
        return Err(Error::domain("empty frame"));
    }
    if v_edges.len() < 2 {
        return Err(Error::domain("need at least one velocity bin"));
    }
    let lag = frame.lag_steps(dt)?;
    let nb = v_edges.len() - 1;
    let side_curve = |side: Side| -> Vec<RmsBin> {
        let mut sums = vec![(0usize, 0.0f64); nb];
        for i in frame.lag_starts(lag) {
            let Some(b) = stats::bin_of(v_edges, frame.velocities[i]) else { continue };
            for s in frame.side(side) {
                let d = s[i + lag] - s[i];
                sums[b].0 += 1;
                sums[b].1 += d * d;
            }
        }
        (0..nb)
            .map(|b| RmsBin {
                v_lo: v_edges[b],
                v_hi: v_edges[b + 1],
                count: sums[b].0,
                mean_square: if sums[b].0 > 0 { sums[b].1 / sums[b].0 as f64 } else { f64::NAN },
            })
            .collect()
    };
    Ok(RmsCurve { lag: dt, v_edges: v_edges.to_vec(), bid: side_curve(Side::Bid), ask: side_curve(Side::Ask) })
}

impl RmsCurve {
    pub fn side(&self, side: Side) -> &[RmsBin] {
        match side {
            Side::Bid => &self.bid,
            Side::Ask => &self.ask,
        }
    }

    /// Pooled rms over bins whose centre `|v|` lies in `[lo, hi]`.
    pub fn pooled_rms(&self, side: Side, lo: f64, hi: f64) -> Option<f64> {
        let (mut c, mut s) = (0usize, 0.0);
        for b in self.side(side) {
            let centre = (0.5 * (b.v_lo + b.v_hi)).abs();
            if centre >= lo && centre <= hi && b.count > 0 {
                c += b.count;
                s += b.mean_square * b.count as f64;
            }
        }
        (c > 0).then(|| (s / c as f64).sqrt())
    }

    pub fn to_table(&self) -> Table {
        Table {
            meta: json!({"statistic": "rms_vs_velocity", "lag": self.lag, "v_edges": self.v_edges}),
            columns: ["v_lo", "v_hi", "bid_rms", "bid_count", "ask_rms", "ask_count"].map(String::from).to_vec(),
            rows: (0..self.bid.len())
                .map(|b| {
                    vec![
                        self.bid[b].v_lo,
                        self.bid[b].v_hi,
                        self.bid[b].rms(),
                        self.bid[b].count as f64,
                        self.ask[b].rms(),
                        self.ask[b].count as f64,
                    ]
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal, StudentT};

    #[test]
    fn student_t3_tail() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = StudentT::new(3.0).unwrap();
        let v: Vec<f64> = (0..400_000).map(|_| t.sample(&mut rng)).collect();
        let d = return_distribution(&v, 1.0, &ReturnOptions::default()).unwrap();
        let h = d.hill_ccdf_index.unwrap();
        assert!((h - 3.0).abs() < 0.3, "{h}");
        assert!(!d.flagged(FLAG_NO_WINDOW), "{:?}", d.flags);
    }

    #[test]
    fn gaussian_has_no_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let v: Vec<f64> = (0..400_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let d = return_distribution(&v, 1.0, &ReturnOptions::default()).unwrap();
        assert!(d.flagged(FLAG_NO_WINDOW), "{:?}", d);
    }

    #[test]
    fn few_samples_flagged() {
        let v: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let d = return_distribution(&v, 1.0, &ReturnOptions::default()).unwrap();
        assert!(d.pdf_exponent.is_none());
        assert!(d.flagged(FLAG_INSUFFICIENT));
    }

    #[test]
    fn histogram_has_unit_mass() {
        let v: Vec<f64> = (1..5000).map(|i| ((i as f64) * 0.37).sin() * i as f64).collect();
        let d = return_distribution(&v, 0.5, &ReturnOptions::default()).unwrap();
        let mass: f64 = (0..d.density.len()).map(|b| d.density[b] * (d.edges[b + 1] - d.edges[b])).sum();
        assert!((mass - 1.0).abs() < 1e-6);
    }

    #[test]
    fn constant_velocity_gives_flat_variance() {
        let v = vec![0.3; 100];
        let n0: Vec<f64> = (0..100).map(|i| 1.0 + i as f64).collect();
        let bins = variance_vs_n0(&v, &n0, &[0.0, 50.0, 101.0]).unwrap();
        for b in bins {
            assert!((b.v2_mean - 0.09).abs() < 1e-15);
        }
    }
}
