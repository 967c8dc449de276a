//! Bid/ask volume fields on a uniform log-distance lattice anchored at the trading price.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Side;

/// Smallest supported lattice.
pub const MIN_CELLS: usize = 4;

/// Volume densities `n±(x, t)` in the co-moving frame. Cell `i` sits at `x = i·dx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderBookField {
    pub bid: Vec<f64>,
    pub ask: Vec<f64>,
    pub dx: f64,
    pub t: f64,
    pub log_price: f64,
    /// Sub-cell boundary displacement not yet turned into a lattice shift, in `[-dx/2, dx/2)`.
    pub fractional_offset: f64,
}

/// Volume carried past `x = 0` by a boundary shift.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Spill {
    pub bid: f64,
    pub ask: f64,
}

impl OrderBookField {
    pub fn new<F: Fn(f64) -> f64>(cells: usize, dx: f64, init_profile: F) -> Result<Self> {
        Self::with_sides(cells, dx, &init_profile, &init_profile)
    }

    /// Builds a field with separate initial profiles per side.
    pub fn with_sides<B, A>(cells: usize, dx: f64, bid_profile: B, ask_profile: A) -> Result<Self>
    where
        B: Fn(f64) -> f64,
        A: Fn(f64) -> f64,
    {
        if cells < MIN_CELLS {
            return Err(Error::domain(format!("need at least {MIN_CELLS} cells, got {cells}")));
        }
        if !(dx > 0.0 && dx.is_finite()) {
            return Err(Error::domain(format!("cell width dx must be > 0, got {dx}")));
        }
        let eval = |f: &dyn Fn(f64) -> f64| -> Result<Vec<f64>> {
            (0..cells)
                .map(|i| {
                    let x = i as f64 * dx;
                    let y = f(x);
                    if y >= 0.0 && y.is_finite() {
                        Ok(y)
                    } else {
                        Err(Error::domain(format!("initial profile gives {y} at x = {x}")))
                    }
                })
                .collect()
        };
        Ok(OrderBookField {
            bid: eval(&bid_profile)?,
            ask: eval(&ask_profile)?,
            dx,
            t: 0.0,
            log_price: 0.0,
            fractional_offset: 0.0,
        })
    }

    /// Builds a field from explicit cell volumes.
    pub fn from_cells(bid: Vec<f64>, ask: Vec<f64>, dx: f64) -> Result<Self> {
        let field = OrderBookField { bid, ask, dx, t: 0.0, log_price: 0.0, fractional_offset: 0.0 };
        field.validate()?;
        Ok(field)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bid.len() != self.ask.len() {
            return Err(Error::domain("bid and ask arrays differ in length"));
        }
        if self.bid.len() < MIN_CELLS {
            return Err(Error::domain(format!("need at least {MIN_CELLS} cells")));
        }
        if !(self.dx > 0.0 && self.dx.is_finite()) {
            return Err(Error::domain("cell width dx must be > 0"));
        }
        if let Some(v) = self.bid.iter().chain(&self.ask).find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::domain(format!("cell volume {v} is not finite and nonnegative")));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.bid.len()
    }

    /// Domain extent `L = cells · dx`.
    pub fn extent(&self) -> f64 {
        self.cells() as f64 * self.dx
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx
    }

    pub fn side(&self, side: Side) -> &[f64] {
        match side {
            Side::Bid => &self.bid,
            Side::Ask => &self.ask,
        }
    }

    pub fn side_mut(&mut self, side: Side) -> &mut Vec<f64> {
        match side {
            Side::Bid => &mut self.bid,
            Side::Ask => &mut self.ask,
        }
    }

    /// `n0 = bid[0] + ask[0]`.
    pub fn boundary_volume(&self) -> f64 {
        self.bid[0] + self.ask[0]
    }

    pub fn total(&self, side: Side) -> f64 {
        self.side(side).iter().sum()
    }

    /// Swaps the two sides and negates the log price: the mirror image of the book.
    pub fn mirrored(&self) -> Self {
        OrderBookField {
            bid: self.ask.clone(),
            ask: self.bid.clone(),
            log_price: -self.log_price,
            ..self.clone()
        }
    }

    /// Moves the trading price by `d_logprice` and translates both sides relative to `x = 0`.
    ///
    /// A price rise brings ask levels closer (ask cells move toward `x = 0`, the front cells
    /// spill) while bid levels recede (empty cells open at `x = 0`). Volume pushed past the
    /// far edge piles into the last cell, so the far boundary never loses volume.
    pub fn shift_boundary(&mut self, d_logprice: f64) -> Result<Spill> {
        let extent = self.extent();
        if !d_logprice.is_finite() || d_logprice.abs() >= extent / 2.0 {
            return Err(Error::domain(format!(
                "price move {d_logprice} exceeds half the grid extent {}",
                extent / 2.0
            )));
        }
        self.log_price += d_logprice;
        let offset = self.fractional_offset + d_logprice;
        // nearest whole cell, so up and down moves are treated alike
        let k = (offset / self.dx + 0.5).floor();
        let mut rem = offset - k * self.dx;
        let mut k = k as i64;
        let half = 0.5 * self.dx;
        if rem >= half {
            rem -= self.dx;
            k += 1;
        } else if rem < -half {
            rem += self.dx;
            k -= 1;
        }
        self.fractional_offset = rem;

        let mut spill = Spill::default();
        if k > 0 {
            let k = k as usize;
            spill.ask = shift_toward_boundary(&mut self.ask, k);
            shift_away_from_boundary(&mut self.bid, k);
        } else if k < 0 {
            let k = (-k) as usize;
            spill.bid = shift_toward_boundary(&mut self.bid, k);
            shift_away_from_boundary(&mut self.ask, k);
        }
        Ok(spill)
    }
}

/// Moves every cell `k` places toward index 0; returns what fell off the front.
fn shift_toward_boundary(cells: &mut [f64], k: usize) -> f64 {
    let n = cells.len();
    let k = k.min(n);
    let spilled: f64 = cells[..k].iter().sum();
    cells.copy_within(k.., 0);
    for c in &mut cells[n - k..] {
        *c = 0.0;
    }
    spilled
}

/// Moves every cell `k` places away from index 0, piling overflow into the last cell.
fn shift_away_from_boundary(cells: &mut [f64], k: usize) {
    let n = cells.len();
    let k = k.min(n - 1);
    if k == 0 {
        return;
    }
    let overflow: f64 = cells[n - 1 - k..].iter().sum();
    cells.copy_within(..n - 1 - k, k);
    cells[n - 1] = overflow;
    for c in &mut cells[..k] {
        *c = 0.0;
    }
}

pub fn new_field<F: Fn(f64) -> f64>(cells: usize, dx: f64, init_profile: F) -> Result<OrderBookField> {
    OrderBookField::new(cells, dx, init_profile)
}

pub fn boundary_volume(field: &OrderBookField) -> f64 {
    field.boundary_volume()
}

/// Functional form of [`OrderBookField::shift_boundary`].
pub fn shift_boundary(field: &OrderBookField, d_logprice: f64) -> Result<(OrderBookField, Spill)> {
    let mut out = field.clone();
    let spill = out.shift_boundary(d_logprice)?;
    Ok((out, spill))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_profile() {
        let f = new_field(8, 0.001, |_| 0.0).unwrap();
        assert!(f.bid.iter().chain(&f.ask).all(|&v| v == 0.0));
        assert_eq!(boundary_volume(&f), 0.0);
    }

    #[test]
    fn constant_profile_totals() {
        let f = new_field(8, 0.001, |_| 5.0).unwrap();
        assert_eq!(f.total(Side::Bid), 40.0);
        assert_eq!(f.total(Side::Ask), 40.0);
        assert_eq!(f.fractional_offset, 0.0);
        assert_eq!(f.t, 0.0);
    }

    #[test]
    fn profile_sampled_at_cell_centres() {
        let f = new_field(1024, 0.0005, |x| x * (-x).exp()).unwrap();
        for (i, &b) in f.bid.iter().enumerate() {
            let x = i as f64 * 0.0005;
            assert_eq!(b, x * (-x).exp());
        }
    }

    #[test]
    fn bad_construction() {
        assert!(new_field(3, 0.1, |_| 1.0).is_err());
        assert!(new_field(8, 0.0, |_| 1.0).is_err());
        assert!(new_field(8, -1.0, |_| 1.0).is_err());
        assert!(new_field(8, 0.1, |x| 0.05 - x).is_err());
    }

    #[test]
    fn boundary_volume_sums_front_cells() {
        let mut f = new_field(8, 0.1, |_| 0.0).unwrap();
        f.bid[0] = 3.0;
        f.ask[0] = 4.0;
        assert_eq!(boundary_volume(&f), 7.0);
    }

    #[test]
    fn zero_shift_is_identity() {
        let f = new_field(16, 0.1, |x| 1.0 + x).unwrap();
        let (g, spill) = shift_boundary(&f, 0.0).unwrap();
        assert_eq!(g.bid, f.bid);
        assert_eq!(g.ask, f.ask);
        assert_eq!(spill, Spill::default());
    }

    #[test]
    fn uniform_field_one_cell_rise() {
        let f = new_field(16, 0.1, |_| 2.0).unwrap();
        let (g, spill) = shift_boundary(&f, 0.1).unwrap();
        assert_eq!(spill.ask, 2.0);
        assert_eq!(spill.bid, 0.0);
        for i in 1..15 {
            assert_eq!(g.bid[i], 2.0);
            assert_eq!(g.ask[i], 2.0);
        }
        assert_eq!(g.bid[0], 0.0);
        assert_eq!(g.ask[15], 0.0);
        assert_eq!(g.bid[15], 4.0);
    }

    #[test]
    fn fall_mirrors_rise() {
        let f = new_field(16, 0.1, |x| 1.0 + 3.0 * x).unwrap();
        let (up, s_up) = shift_boundary(&f, 0.25).unwrap();
        let (down, s_down) = shift_boundary(&f.mirrored(), -0.25).unwrap();
        assert_eq!(up.bid, down.ask);
        assert_eq!(up.ask, down.bid);
        assert_eq!(s_up.ask, s_down.bid);
    }

    #[test]
    fn sub_half_cell_moves_accumulate() {
        let mut f = new_field(16, 0.1, |_| 1.0).unwrap();
        let before = f.clone();
        f.shift_boundary(-0.04).unwrap();
        f.shift_boundary(0.08).unwrap();
        assert_eq!(f.bid, before.bid);
        f.shift_boundary(0.02).unwrap();
        assert_eq!(f.bid[0], 0.0);
        assert!((f.fractional_offset + 0.04).abs() < 1e-12);
    }

    #[test]
    fn oversized_shift_rejected() {
        let mut f = new_field(16, 0.1, |_| 1.0).unwrap();
        assert!(f.shift_boundary(0.8).is_err());
        assert!(f.shift_boundary(-0.8).is_err());
        assert!(f.shift_boundary(f64::NAN).is_err());
        assert_eq!(f.log_price, 0.0);
    }
}
