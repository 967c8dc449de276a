//! Ready-made run specifications shared by the command line and the test suites.

use crate::dynamics::{GridSpec, NoiseTimeScaling, RunSpec, StepConfig, VelocityClosure, VelocityNoise};
use crate::params::{MarketOrderParams, ModelParams, Profile};
use crate::stable_noise::{OneSidedStable, StableParams};

/// Seed of the reference run.
pub const REFERENCE_SEED: u64 = 7;
/// Length of the reference run, in ticks.
pub const REFERENCE_STEPS: usize = 2_200_000;
/// Leading ticks discarded before statistics are taken.
pub const REFERENCE_BURN_IN: usize = 200_000;

/// Per-tick relaxation rate of the resting book.
const RELAXATION: f64 = 1.5e-3;
/// Equilibrium volume per cell and side.
const LEVEL: f64 = 5.0;

fn reference_stable() -> StableParams {
    StableParams { alpha: 0.5, scale: 1.0, truncation_quantile: 0.9 }
}

/// Mean of one noise draw for the given law.
pub fn noise_mean(stable: StableParams) -> f64 {
    OneSidedStable::new(stable).map(|s| s.truncated_mean()).unwrap_or(f64::NAN)
}

/// Continuous-field run whose boundary volume settles at `n0 ≈ 10 = k0` with `k1 = k_inf`.
///
/// The book relaxes at rate [`RELAXATION`] per tick toward [`LEVEL`] per cell, diffusion is
/// weak, and `v0` is far below `dx` so that the price rarely crosses a cell.
pub fn reference_cf() -> RunSpec {
    let stable = reference_stable();
    let sigma_out = RELAXATION / noise_mean(stable);
    RunSpec {
        params: ModelParams {
            stable,
            sigma_in: Profile::constant(LEVEL * sigma_out),
            sigma_out: Profile::constant(sigma_out),
            diffusion: Profile::constant(1e-12),
            diffusion_ask: None,
            mo: MarketOrderParams { k0: 2.0 * LEVEL, k_inf: 0.1, k1: 0.1, v0: 1e-6 },
            activity: None,
            tau: 1.0,
            n0_floor: 1e-9,
        },
        step: StepConfig {
            dt: 1.0,
            closure: VelocityClosure::Langevin { substeps: 10, noise: VelocityNoise::Activity },
            noise_scaling: NoiseTimeScaling::Linear,
        },
        grid: GridSpec { cells: 512, dx: 1e-3 },
        initial: Profile::constant(LEVEL),
        initial_ask: None,
        initial_velocity: 0.0,
    }
}

/// Reference run with a velocity spread of order `v0`, the base for baseline contrasts.
///
/// `k_inf = 2 n0²` makes the flat velocity noise give `std(v) ≈ v0`, so velocity-dependent
/// placement is exercised across its whole `tanh` range. `v0` is small enough that the price
/// stays inside one cell over a few million ticks.
pub fn contrast_cf() -> RunSpec {
    let mut spec = reference_cf();
    let n0 = 2.0 * LEVEL;
    spec.params.mo = MarketOrderParams { k0: n0, k_inf: 2.0 * n0 * n0, k1: 0.0, v0: 1e-7 };
    spec.grid.cells = 128;
    spec
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for s in [reference_cf(), contrast_cf()] {
            s.params.validate_on(s.grid.cells, s.grid.dx).unwrap();
            assert!(s.simulation(1).is_ok());
        }
    }
}
