//! Comparison models built from the continuous-field stepper with selected mechanisms removed.
//!
//! * `CS`: order flow ignores the price velocity. No trend-following market orders, no
//!   velocity-dependent placement, and velocity noise that does not depend on `v`.
//! * `KSTT`: every trader follows the trend. Placement carries a trend term of the same size
//!   at every `x`, and diffusion is switched off.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dynamics::{RunSpec, Simulation, StepRecord, VelocityClosure, VelocityNoise};
use crate::error::{Error, Result};
use crate::params::{PlacementActivityParams, Profile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BaselineKind {
    #[serde(rename = "cs", alias = "CS")]
    Cs,
    #[serde(rename = "kstt", alias = "KSTT")]
    Kstt,
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cs" => Ok(BaselineKind::Cs),
            "kstt" => Ok(BaselineKind::Kstt),
            other => Err(Error::domain(format!("unknown baseline model '{other}' (expected cs or kstt)"))),
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaselineKind::Cs => "cs",
            BaselineKind::Kstt => "kstt",
        })
    }
}

/// Share of the base placement rate that KSTT turns into a trend term when the spec has no
/// activity function of its own.
pub const KSTT_DEFAULT_TREND_SHARE: f64 = 0.45;

fn flat_noise(closure: VelocityClosure) -> VelocityClosure {
    match closure {
        VelocityClosure::Langevin { substeps, .. } => VelocityClosure::Langevin { substeps, noise: VelocityNoise::Flat },
        other => other,
    }
}

/// Rewrites a continuous-field run spec into the chosen baseline.
pub fn baseline_spec(kind: BaselineKind, spec: &RunSpec) -> Result<RunSpec> {
    let mut out = spec.clone();
    out.step.closure = flat_noise(spec.step.closure);
    match kind {
        BaselineKind::Cs => {
            out.params.mo.k0 = 0.0;
            out.params.mo.k1 = 0.0;
            if let Some(a) = &spec.params.activity {
                // keep the resting placement level, drop every v dependence
                let xs: Vec<f64> = (0..spec.grid.cells).map(|i| i as f64 * spec.grid.dx).collect();
                let values = xs.iter().map(|&x| (a.k_inf_in.eval(x) - a.k1_in.eval(x)) * a.v0_in.eval(x)).collect();
                out.params.sigma_in = Profile::Table { xs, values };
            }
            out.params.activity = None;
        }
        BaselineKind::Kstt => {
            let cells = spec.grid.cells;
            let dx = spec.grid.dx;
            out.params.diffusion = Profile::constant(0.0);
            out.params.diffusion_ask = None;
            let activity = match &spec.params.activity {
                Some(a) => {
                    let k0_max = (0..cells).map(|i| a.k0_in.eval(i as f64 * dx)).fold(0.0, f64::max);
                    PlacementActivityParams { k0_in: Profile::constant(k0_max), ..a.clone() }
                }
                None => {
                    let v0 = spec.params.mo.v0;
                    let k_inf_in = spec.params.sigma_in.scaled(1.0 / v0);
                    let mean = (0..cells).map(|i| k_inf_in.eval(i as f64 * dx)).sum::<f64>() / cells as f64;
                    PlacementActivityParams {
                        k0_in: Profile::constant(KSTT_DEFAULT_TREND_SHARE * mean),
                        k_inf_in,
                        k1_in: Profile::constant(0.0),
                        v0_in: Profile::constant(v0),
                    }
                }
            };
            out.params.activity = Some(activity);
        }
    }
    out.params.validate_on(out.grid.cells, out.grid.dx)?;
    Ok(out)
}

pub fn baseline_simulation(kind: BaselineKind, spec: &RunSpec, seed: u64) -> Result<Simulation> {
    baseline_spec(kind, spec)?.simulation(seed)
}

/// Runs a baseline for `steps` ticks and returns every record.
pub fn run_baseline(kind: BaselineKind, spec: &RunSpec, steps: usize, seed: u64) -> Result<Vec<StepRecord>> {
    if steps == 0 {
        return Err(Error::domain("baseline run needs at least one step"));
    }
    baseline_simulation(kind, spec, seed)?.collect(steps)
}
