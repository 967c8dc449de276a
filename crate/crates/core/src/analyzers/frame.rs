use serde::{Deserialize, Serialize};

use crate::dynamics::{Simulation, StepRecord};
use crate::error::{Error, Result};
use crate::field::OrderBookField;
use crate::Side;

/// Time-aligned observations of selected lattice bins plus velocity and boundary volume.
///
/// Cell volumes are stored per bin (`bid[b][k]` is bin `b` at sample `k`). Samples belong to
/// segments; differences are never taken across a segment boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesFrame {
    pub times: Vec<f64>,
    /// Spacing between consecutive samples of a segment.
    pub cadence: f64,
    pub segments: Vec<u32>,
    /// Log distance of each stored bin.
    pub x: Vec<f64>,
    pub bid: Vec<Vec<f64>>,
    pub ask: Vec<Vec<f64>>,
    pub velocities: Vec<f64>,
    pub n0s: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mo_flows: Option<Vec<(f64, f64)>>,
}

impl SeriesFrame {
    pub fn empty(x: Vec<f64>, cadence: f64) -> Self {
        let bins = x.len();
        SeriesFrame {
            times: Vec::new(),
            cadence,
            segments: Vec::new(),
            x,
            bid: vec![Vec::new(); bins],
            ask: vec![Vec::new(); bins],
            velocities: Vec::new(),
            n0s: Vec::new(),
            mo_flows: None,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn bins(&self) -> usize {
        self.x.len()
    }

    pub fn side(&self, side: Side) -> &[Vec<f64>] {
        match side {
            Side::Bid => &self.bid,
            Side::Ask => &self.ask,
        }
    }

    /// `(v, buy, sell, n0)` with the flows over `(t[k-1], t[k]]` paired with the velocity and
    /// boundary volume seen at `t[k-1]`, within segments.
    #[allow(clippy::type_complexity)]
    pub fn market_order_pairs(&self) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
        let flows = self.mo_flows.as_ref().ok_or_else(|| Error::data("frame has no market-order flows"))?;
        let (mut v, mut buy, mut sell, mut n0) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for k in 1..self.len() {
            if self.segments[k] == self.segments[k - 1] {
                v.push(self.velocities[k - 1]);
                n0.push(self.n0s[k - 1]);
                buy.push(flows[k].0);
                sell.push(flows[k].1);
            }
        }
        Ok((v, buy, sell, n0))
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.segments.len() != n || self.velocities.len() != n || self.n0s.len() != n {
            return Err(Error::domain("frame arrays are not time-aligned"));
        }
        if self.bid.len() != self.bins() || self.ask.len() != self.bins() {
            return Err(Error::domain("frame bin arrays do not match the x axis"));
        }
        if self.bid.iter().chain(&self.ask).any(|s| s.len() != n) {
            return Err(Error::domain("frame volume series are not time-aligned"));
        }
        if let Some(m) = &self.mo_flows {
            if m.len() != n {
                return Err(Error::domain("market-order flows are not time-aligned"));
            }
        }
        if !(self.cadence > 0.0) {
            return Err(Error::domain("frame cadence must be > 0"));
        }
        Ok(())
    }

    /// Appends one sample. `bid` and `ask` hold the stored bins in order.
    pub fn push(&mut self, t: f64, segment: u32, bid: &[f64], ask: &[f64], v: f64, n0: f64) {
        self.times.push(t);
        self.segments.push(segment);
        for (b, &val) in bid.iter().enumerate() {
            self.bid[b].push(val);
        }
        for (b, &val) in ask.iter().enumerate() {
            self.ask[b].push(val);
        }
        self.velocities.push(v);
        self.n0s.push(n0);
    }

    /// Index of the stored bin nearest to `x`.
    pub fn bin_index(&self, x: f64) -> Result<usize> {
        self.x
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - x).abs().total_cmp(&(b.1 - x).abs()))
            .map(|(i, _)| i)
            .ok_or_else(|| Error::domain("frame has no spatial bins"))
    }

    /// Converts a lag in time units into a whole number of samples.
    pub fn lag_steps(&self, dt: f64) -> Result<usize> {
        let k = dt / self.cadence;
        let r = k.round();
        if !(r >= 1.0) || (k - r).abs() > 1e-6 * r.max(1.0) {
            return Err(Error::domain(format!(
                "lag {dt} is not a positive multiple of the frame cadence {}",
                self.cadence
            )));
        }
        Ok(r as usize)
    }

    /// Start indices `i` such that `i` and `i + lag` lie in the same segment.
    pub fn lag_starts(&self, lag: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.len().saturating_sub(lag)).filter(move |&i| self.segments[i] == self.segments[i + lag])
    }

    /// `(n, Δn)` pairs at a bin: the current volume and its change over `lag` samples.
    pub fn delta_pairs(&self, bin: usize, side: Side, lag: usize) -> Vec<(f64, f64)> {
        let s = &self.side(side)[bin];
        self.lag_starts(lag).map(|i| (s[i], s[i + lag] - s[i])).collect()
    }

    /// Copy with the time axis reversed (segment order reversed too).
    pub fn time_reversed(&self) -> Self {
        let rev = |v: &Vec<f64>| v.iter().rev().cloned().collect::<Vec<_>>();
        let t_end = self.times.last().copied().unwrap_or(0.0);
        SeriesFrame {
            times: self.times.iter().rev().map(|t| t_end - t).collect(),
            cadence: self.cadence,
            segments: self.segments.iter().rev().cloned().collect(),
            x: self.x.clone(),
            bid: self.bid.iter().map(rev).collect(),
            ask: self.ask.iter().map(rev).collect(),
            velocities: rev(&self.velocities),
            n0s: rev(&self.n0s),
            mo_flows: self.mo_flows.as_ref().map(|m| m.iter().rev().cloned().collect()),
        }
    }
}

/// Builds a frame from a simulation as it runs.
#[derive(Debug, Clone)]
pub struct FrameRecorder {
    cells: Vec<usize>,
    every: usize,
    counter: usize,
    with_mo: bool,
    frame: SeriesFrame,
    mo: Vec<(f64, f64)>,
    mo_acc: (f64, f64),
    bid_buf: Vec<f64>,
    ask_buf: Vec<f64>,
}

impl FrameRecorder {
    /// Records the listed lattice cells every `every` steps of length `dt`.
    pub fn new(cells: Vec<usize>, dx: f64, dt: f64, every: usize) -> Self {
        let every = every.max(1);
        let x = cells.iter().map(|&i| i as f64 * dx).collect();
        let n = cells.len();
        FrameRecorder {
            cells,
            every,
            counter: 0,
            with_mo: true,
            frame: SeriesFrame::empty(x, dt * every as f64),
            mo: Vec::new(),
            mo_acc: (0.0, 0.0),
            bid_buf: vec![0.0; n],
            ask_buf: vec![0.0; n],
        }
    }

    /// Records every cell of the lattice at every step.
    pub fn all_cells(field: &OrderBookField, dt: f64) -> Self {
        Self::new((0..field.cells()).collect(), field.dx, dt, 1)
    }

    pub fn without_market_orders(mut self) -> Self {
        self.with_mo = false;
        self
    }

    /// Records the starting state as sample 0.
    pub fn push_initial(&mut self, field: &OrderBookField, v: f64) {
        self.sample(field, v, field.boundary_volume());
        if self.with_mo {
            self.mo.push((0.0, 0.0));
        }
    }

    fn sample(&mut self, field: &OrderBookField, v: f64, n0: f64) {
        for (k, &c) in self.cells.iter().enumerate() {
            self.bid_buf[k] = field.bid[c];
            self.ask_buf[k] = field.ask[c];
        }
        self.frame.push(field.t, 0, &self.bid_buf, &self.ask_buf, v, n0);
    }

    pub fn observe(&mut self, rec: &StepRecord, field: &OrderBookField) {
        self.mo_acc.0 += rec.mo_buy;
        self.mo_acc.1 += rec.mo_sell;
        self.counter += 1;
        if self.counter == self.every {
            self.counter = 0;
            self.sample(field, rec.v, rec.n0);
            if self.with_mo {
                self.mo.push(self.mo_acc);
            }
            self.mo_acc = (0.0, 0.0);
        }
    }

    pub fn finish(mut self) -> SeriesFrame {
        if self.with_mo {
            self.frame.mo_flows = Some(self.mo);
        }
        self.frame
    }
}

/// Runs `steps` ticks of `sim`, recording `cells` every `every` steps.
pub fn record_frame(sim: &mut Simulation, steps: usize, cells: Vec<usize>, every: usize) -> Result<SeriesFrame> {
    let dt = sim.stepper().config().dt;
    let mut rec = FrameRecorder::new(cells, sim.field().dx, dt, every);
    rec.push_initial(sim.field(), sim.velocity());
    sim.run(steps, |r, f| rec.observe(r, f))?;
    Ok(rec.finish())
}

/// Only velocities and boundary volumes, for long runs.
pub fn record_velocities(sim: &mut Simulation, steps: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut v = Vec::with_capacity(steps);
    let mut n0 = Vec::with_capacity(steps);
    sim.run(steps, |r, _| {
        v.push(r.v);
        n0.push(r.n0);
    })?;
    Ok((v, n0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame() -> SeriesFrame {
        let mut f = SeriesFrame::empty(vec![0.0, 0.1], 1.0);
        for k in 0..6 {
            let seg = if k < 3 { 0 } else { 1 };
            f.push(k as f64, seg, &[k as f64, 1.0], &[2.0, 3.0], 0.0, 1.0);
        }
        f
    }

    #[test]
    fn lags_respect_segments() {
        let f = frame();
        let starts: Vec<_> = f.lag_starts(1).collect();
        assert_eq!(starts, vec![0, 1, 3, 4]);
        assert_eq!(f.delta_pairs(0, Side::Bid, 2), vec![(0.0, 2.0), (3.0, 2.0)]);
    }

    #[test]
    fn lag_conversion() {
        let f = frame();
        assert_eq!(f.lag_steps(2.0).unwrap(), 2);
        assert!(f.lag_steps(0.5).is_err());
        assert!(f.lag_steps(1.5).is_err());
    }

    #[test]
    fn reversal_is_involution() {
        let f = frame();
        let r = f.time_reversed().time_reversed();
        assert_eq!(r.bid, f.bid);
        assert_eq!(r.segments, f.segments);
        assert!(f.validate().is_ok());
    }
}
