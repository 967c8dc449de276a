//! Empirical statistics of order-book series and parameter fitting.
//!
//! Every analyzer is a pure function of its input frame or series. Results convert into a
//! [`Table`] (named columns plus a JSON metadata object) for CSV export.

pub mod conditional;
pub mod correlation;
pub mod fit;
pub mod frame;
pub mod market_orders;
pub mod returns;
pub mod stats;
pub mod suite;

use serde::{Deserialize, Serialize};

pub use conditional::{
    conditional_delta_distribution, mean_delta_vs_n, ConditionalDistribution, ConditionalOptions, MeanDeltaFit,
    MeanDeltaOptions,
};
pub use correlation::{spatial_correlation, velocity_volume_correlation, CorrelationProfile, VelocityVolumeCorrelation};
pub use fit::{FitParam, FitReport, LmOptions};
pub use frame::{record_frame, record_velocities, FrameRecorder, SeriesFrame};
pub use market_orders::{fit_activity_curve, fit_market_order_response, imbalance_symmetry_residual};
pub use suite::{parse_selection, run_statistic, SuiteOptions};
pub use returns::{
    return_distribution, rms_delta_vs_velocity, variance_vs_n0, velocity_variance_vs_n0, ReturnDistribution,
    ReturnOptions, RmsCurve, VarianceBin,
};

/// Column-oriented analysis output with a metadata header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub meta: serde_json::Value,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

/// Names accepted by the statistic selector, in output order.
pub const STATISTICS: [&str; 8] = [
    "conditional",
    "mean_delta",
    "spatial_correlation",
    "returns",
    "variance_vs_n0",
    "velocity_volume_correlation",
    "rms_vs_velocity",
    "market_order_fit",
];
