//! Continuous-field model of limit order book dynamics.
//!
//! The bid and ask books are volume densities `n±(x, t)` over the log distance `x` from the
//! trading price. Limit orders arrive and cancel with one-sided stable noise, diffuse along
//! `x`, and are drained at `x = 0` by market orders whose imbalance follows the price
//! velocity. The crate provides the lattice simulator, the Fokker-Planck stationary return
//! density, two comparison models, statistic analyzers and file formats.

pub mod analyzers;
pub mod baselines;
pub mod dynamics;
pub mod error;
pub mod field;
pub mod fokker_planck;
pub mod ingest;
pub mod params;
pub mod presets;
pub mod quad;
pub mod stable_noise;

use serde::{Deserialize, Serialize};

pub use error::{Error, Result};
pub use field::{OrderBookField, Spill};
pub use params::{MarketOrderParams, ModelParams, PlacementActivityParams, Profile};
pub use stable_noise::StableParams;

/// Book side. Bid volume sits below the trading price, ask volume above.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Bid,
    Ask,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Bid, Side::Ask];

    /// `+1` for bid, `-1` for ask: the sign of the trend term in the activity functions.
    pub fn sign(self) -> f64 {
        match self {
            Side::Bid => 1.0,
            Side::Ask => -1.0,
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Bid => Side::Ask,
            Side::Ask => Side::Bid,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::Bid => "bid",
            Side::Ask => "ask",
        }
    }
}
