//! Model constants and spatial profiles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stable_noise::StableParams;

/// A nonnegative function of log-distance `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    Constant { value: f64 },
    /// `floor + amplitude · exp(-x / length)`
    Exponential { amplitude: f64, length: f64, #[serde(default)] floor: f64 },
    /// `amplitude · (x / scale)^shape · exp(-x / scale)`: a hump peaking at `shape · scale`.
    Hump { amplitude: f64, shape: f64, scale: f64, #[serde(default)] floor: f64 },
    /// Piecewise-linear interpolation through `(xs[i], values[i])`, flat outside.
    Table { xs: Vec<f64>, values: Vec<f64> },
}

impl Profile {
    pub fn constant(value: f64) -> Self {
        Profile::Constant { value }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Profile::Constant { value } => *value,
            Profile::Exponential { amplitude, length, floor } => floor + amplitude * (-x / length).exp(),
            Profile::Hump { amplitude, shape, scale, floor } => {
                let u = x / scale;
                floor + amplitude * u.powf(*shape) * (-u).exp()
            }
            Profile::Table { xs, values } => {
                if xs.is_empty() {
                    return 0.0;
                }
                if x <= xs[0] {
                    return values[0];
                }
                let last = xs.len() - 1;
                if x >= xs[last] {
                    return values[last];
                }
                let i = xs.partition_point(|&xi| xi <= x) - 1;
                let w = (x - xs[i]) / (xs[i + 1] - xs[i]);
                values[i] * (1.0 - w) + values[i + 1] * w
            }
        }
    }

    /// Scales the profile's output by `factor`.
    pub fn scaled(&self, factor: f64) -> Profile {
        match self {
            Profile::Constant { value } => Profile::Constant { value: value * factor },
            Profile::Exponential { amplitude, length, floor } => {
                Profile::Exponential { amplitude: amplitude * factor, length: *length, floor: floor * factor }
            }
            Profile::Hump { amplitude, shape, scale, floor } => Profile::Hump {
                amplitude: amplitude * factor,
                shape: *shape,
                scale: *scale,
                floor: floor * factor,
            },
            Profile::Table { xs, values } => {
                Profile::Table { xs: xs.clone(), values: values.iter().map(|v| v * factor).collect() }
            }
        }
    }

    fn check_shape(&self, name: &str) -> Result<()> {
        match self {
            Profile::Exponential { length, .. } if !(*length > 0.0) => {
                Err(Error::domain(format!("{name}: exponential length must be > 0")))
            }
            Profile::Hump { scale, shape, .. } if !(*scale > 0.0) || *shape < 0.0 => {
                Err(Error::domain(format!("{name}: hump needs scale > 0 and shape >= 0")))
            }
            Profile::Table { xs, values } => {
                if xs.len() != values.len() || xs.is_empty() {
                    return Err(Error::domain(format!("{name}: table needs equal, nonempty xs and values")));
                }
                if xs.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::domain(format!("{name}: table xs must be strictly increasing")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Checks the profile is well formed and nonnegative on the cell centres of `[0, length)`.
    pub fn validate_on(&self, name: &str, cells: usize, dx: f64) -> Result<()> {
        self.check_shape(name)?;
        for i in 0..cells {
            let x = i as f64 * dx;
            let y = self.eval(x);
            if !(y >= 0.0 && y.is_finite()) {
                return Err(Error::domain(format!("{name}({x}) = {y} is not a finite nonnegative value")));
            }
        }
        Ok(())
    }
}

/// Market-order response constants of the buy/sell flow law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketOrderParams {
    pub k0: f64,
    pub k_inf: f64,
    pub k1: f64,
    pub v0: f64,
}

impl MarketOrderParams {
    pub fn validate(&self) -> Result<()> {
        let MarketOrderParams { k0, k_inf, k1, v0 } = *self;
        if !(k0 >= 0.0 && k_inf >= 0.0 && k1 >= 0.0) || !(k0 + k_inf + k1).is_finite() {
            return Err(Error::domain("market-order constants k0, k_inf, k1 must be finite and >= 0"));
        }
        if !(v0 > 0.0 && v0.is_finite()) {
            return Err(Error::domain(format!("market-order velocity scale v0 must be > 0, got {v0}")));
        }
        if k1 > k_inf {
            return Err(Error::domain(format!("need k_inf >= k1 (got k_inf={k_inf}, k1={k1})")));
        }
        Ok(())
    }
}

/// Velocity-dependent limit-order placement activity; every field is a profile over `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementActivityParams {
    pub k0_in: Profile,
    pub k_inf_in: Profile,
    pub k1_in: Profile,
    pub v0_in: Profile,
}

impl PlacementActivityParams {
    pub fn validate_on(&self, cells: usize, dx: f64) -> Result<()> {
        self.k0_in.validate_on("k0_in", cells, dx)?;
        self.k_inf_in.validate_on("k_inf_in", cells, dx)?;
        self.k1_in.validate_on("k1_in", cells, dx)?;
        self.v0_in.validate_on("v0_in", cells, dx)?;
        for i in 0..cells {
            let x = i as f64 * dx;
            if !(self.v0_in.eval(x) > 0.0) {
                return Err(Error::domain(format!("v0_in({x}) must be > 0")));
            }
            if self.k1_in.eval(x) > self.k_inf_in.eval(x) {
                return Err(Error::domain(format!("need k_inf_in >= k1_in at x = {x}")));
            }
        }
        Ok(())
    }
}

/// All constants of the continuous-field model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub stable: StableParams,
    /// Placement scale σ_in(x); used when `activity` is absent.
    pub sigma_in: Profile,
    /// Cancellation rate σ_out(x).
    pub sigma_out: Profile,
    /// Diffusion rate D(x) of the bid side (and of the ask side unless overridden).
    pub diffusion: Profile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diffusion_ask: Option<Profile>,
    pub mo: MarketOrderParams,
    /// Velocity-dependent placement σ_in(x, v); replaces `sigma_in` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activity: Option<PlacementActivityParams>,
    /// Tick duration.
    pub tau: f64,
    pub n0_floor: f64,
}

impl ModelParams {
    pub fn diffusion_for(&self, side: crate::Side) -> &Profile {
        match side {
            crate::Side::Bid => &self.diffusion,
            crate::Side::Ask => self.diffusion_ask.as_ref().unwrap_or(&self.diffusion),
        }
    }

    pub fn validate_on(&self, cells: usize, dx: f64) -> Result<()> {
        self.stable.validate()?;
        self.sigma_in.validate_on("sigma_in", cells, dx)?;
        self.sigma_out.validate_on("sigma_out", cells, dx)?;
        self.diffusion.validate_on("diffusion", cells, dx)?;
        if let Some(d) = &self.diffusion_ask {
            d.validate_on("diffusion_ask", cells, dx)?;
        }
        self.mo.validate()?;
        if let Some(a) = &self.activity {
            a.validate_on(cells, dx)?;
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::domain(format!("tick tau must be > 0, got {}", self.tau)));
        }
        if !(self.n0_floor > 0.0 && self.n0_floor.is_finite()) {
            return Err(Error::domain(format!("n0_floor must be > 0, got {}", self.n0_floor)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_interpolates() {
        let p = Profile::Table { xs: vec![0.0, 1.0, 3.0], values: vec![0.0, 2.0, 0.0] };
        assert_eq!(p.eval(-1.0), 0.0);
        assert_eq!(p.eval(0.5), 1.0);
        assert_eq!(p.eval(2.0), 1.0);
        assert_eq!(p.eval(9.0), 0.0);
    }

    #[test]
    fn hump_peaks_at_shape_times_scale() {
        let p = Profile::Hump { amplitude: 1.0, shape: 2.0, scale: 0.01, floor: 0.0 };
        let peak = p.eval(0.02);
        assert!(p.eval(0.019) < peak && p.eval(0.021) < peak);
    }

    #[test]
    fn negative_profile_rejected() {
        let p = Profile::Exponential { amplitude: -1.0, length: 1.0, floor: 0.0 };
        assert!(p.validate_on("p", 4, 0.1).is_err());
    }

    #[test]
    fn market_order_invariants() {
        let ok = MarketOrderParams { k0: 1.0, k_inf: 2.0, k1: 2.0, v0: 0.1 };
        assert!(ok.validate().is_ok());
        assert!(MarketOrderParams { k1: 3.0, ..ok }.validate().is_err());
        assert!(MarketOrderParams { v0: 0.0, ..ok }.validate().is_err());
    }

    #[test]
    fn profile_toml_shape() {
        let p: Profile = serde_json::from_str(r#"{"kind":"exponential","amplitude":2.0,"length":0.5}"#).unwrap();
        assert_eq!(p.eval(0.0), 2.0);
    }
}
