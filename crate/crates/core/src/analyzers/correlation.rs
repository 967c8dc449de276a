use serde::{Deserialize, Serialize};
use serde_json::json;

use super::frame::SeriesFrame;
use super::stats;
use super::Table;
use crate::error::{Error, Result};
use crate::Side;

/// Pearson correlation of `Δn` at a reference bin against `Δn` at every stored bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationProfile {
    pub x_ref: f64,
    pub side: Side,
    pub lag: f64,
    pub x: Vec<f64>,
    /// `None` where a series has zero variance.
    pub correlation: Vec<Option<f64>>,
    pub samples: usize,
}

fn deltas(frame: &SeriesFrame, side: Side, bin: usize, starts: &[usize], lag: usize) -> Vec<f64> {
    let s = &frame.side(side)[bin];
    starts.iter().map(|&i| s[i + lag] - s[i]).collect()
}

pub fn spatial_correlation(frame: &SeriesFrame, x_ref: f64, side: Side, dt: f64) -> Result<CorrelationProfile> {
    if frame.is_empty() {
        return Err(Error::domain("empty frame"));
    }
    let lag = frame.lag_steps(dt)?;
    let r = frame.bin_index(x_ref)?;
    let starts: Vec<usize> = frame.lag_starts(lag).collect();
    let reference = deltas(frame, side, r, &starts, lag);
    let correlation = (0..frame.bins())
        .map(|b| {
            if b == r {
                // self-correlation is 1 by definition when the series varies
                return stats::pearson(&reference, &reference).map(|_| 1.0);
            }
            stats::pearson(&reference, &deltas(frame, side, b, &starts, lag))
        })
        .collect();
    Ok(CorrelationProfile { x_ref: frame.x[r], side, lag: dt, x: frame.x.clone(), correlation, samples: starts.len() })
}

impl CorrelationProfile {
    /// `2/√N`: the two-sigma band for a zero correlation.
    pub fn null_band(&self) -> f64 {
        2.0 / (self.samples as f64).sqrt()
    }

    pub fn to_table(&self) -> Table {
        Table {
            meta: json!({
                "statistic": "spatial_correlation",
                "x_ref": self.x_ref,
                "side": self.side.name(),
                "lag": self.lag,
                "samples": self.samples,
                "null_band": self.null_band(),
            }),
            columns: vec!["x".into(), "correlation".into()],
            rows: self.x.iter().zip(&self.correlation).map(|(x, c)| vec![*x, c.unwrap_or(f64::NAN)]).collect(),
        }
    }
}

/// Per-bin correlation `⟨v, Δn⟩` of the velocity at the start of each interval with the volume change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityVolumeCorrelation {
    pub lag: f64,
    pub x: Vec<f64>,
    pub bid: Vec<Option<f64>>,
    pub ask: Vec<Option<f64>>,
    pub samples: usize,
}

pub fn velocity_volume_correlation(frame: &SeriesFrame, dt: f64) -> Result<VelocityVolumeCorrelation> {
    if frame.is_empty() {
        return Err(Error::domain("empty frame"));
    }
    let lag = frame.lag_steps(dt)?;
    let starts: Vec<usize> = frame.lag_starts(lag).collect();
    let v: Vec<f64> = starts.iter().map(|&i| frame.velocities[i]).collect();
    let per_side = |side: Side| -> Vec<Option<f64>> {
        (0..frame.bins()).map(|b| stats::pearson(&v, &deltas(frame, side, b, &starts, lag))).collect()
    };
    Ok(VelocityVolumeCorrelation {
        lag: dt,
        x: frame.x.clone(),
        bid: per_side(Side::Bid),
        ask: per_side(Side::Ask),
        samples: starts.len(),
    })
}

impl VelocityVolumeCorrelation {
    pub fn side(&self, side: Side) -> &[Option<f64>] {
        match side {
            Side::Bid => &self.bid,
            Side::Ask => &self.ask,
        }
    }

    pub fn to_table(&self) -> Table {
        Table {
            meta: json!({"statistic": "velocity_volume_correlation", "lag": self.lag, "samples": self.samples}),
            columns: vec!["x".into(), "bid".into(), "ask".into()],
            rows: (0..self.x.len())
                .map(|b| vec![self.x[b], self.bid[b].unwrap_or(f64::NAN), self.ask[b].unwrap_or(f64::NAN)])
                .collect(),
        }
    }
}
