//! One tick of the continuous-field model: diffusion, placement, cancellation, market orders,
//! velocity and advection, applied in that order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::OrderBookField;
use crate::fokker_planck::activity_bracket;
use crate::params::{MarketOrderParams, ModelParams, PlacementActivityParams};
use crate::stable_noise::OneSidedStable;
use crate::Side;

/// Largest admissible `max D · dt / dx²` for the explicit diffusion update.
pub const DIFFUSION_STABILITY_LIMIT: f64 = 0.5;

#[inline]
fn sech(z: f64) -> f64 {
    1.0 / z.cosh()
}

/// Market-order volumes `(buy, sell)` triggered per tick at velocity `v`, each clamped at 0.
pub fn market_order_rate(v: f64, p: &MarketOrderParams) -> (f64, f64) {
    let z = v / p.v0;
    let trend = p.k0 * z.tanh();
    let base = p.k_inf - p.k1 * sech(z);
    (((trend + base) * p.v0).max(0.0), ((-trend + base) * p.v0).max(0.0))
}

/// Unclamped imbalance `J = buy − sell = 2 k0 v0 tanh(v / v0)`.
pub fn order_imbalance(v: f64, p: &MarketOrderParams) -> f64 {
    2.0 * p.k0 * p.v0 * (v / p.v0).tanh()
}

/// Velocity-dependent placement scale `σ_in(x, v)` for one side, clamped at 0.
pub fn placement_scale(x: f64, v: f64, side: Side, p: &PlacementActivityParams) -> f64 {
    activity_value(
        v,
        side.sign(),
        p.k0_in.eval(x),
        p.k_inf_in.eval(x),
        p.k1_in.eval(x),
        p.v0_in.eval(x),
    )
}

#[inline]
fn activity_value(v: f64, sign: f64, k0: f64, k_inf: f64, k1: f64, v0: f64) -> f64 {
    let z = v / v0;
    ((sign * k0 * z.tanh() + k_inf - k1 * sech(z)) * v0).max(0.0)
}

/// Second-order one-sided derivative at index 0 of samples spaced `dx` apart.
#[inline]
pub fn boundary_gradient(f0: f64, f1: f64, f2: f64, dx: f64) -> f64 {
    (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * dx)
}

/// `∂x(D n_ask)(0) − ∂x(D n_bid)(0)`: the diffusive part of the boundary flux.
pub fn boundary_flux(field: &OrderBookField, p: &ModelParams) -> f64 {
    let grad = |side: Side| {
        let d = p.diffusion_for(side);
        let n = field.side(side);
        let f = |i: usize| d.eval(field.x(i)) * n[i];
        boundary_gradient(f(0), f(1), f(2), field.dx)
    };
    grad(Side::Ask) - grad(Side::Bid)
}

/// Lagged continuity closure: `v = [J(v_prev) + ∂x(D n_ask)(0) − ∂x(D n_bid)(0)] / max(n0, floor)`.
pub fn compute_velocity(field: &OrderBookField, v_prev: f64, p: &ModelParams) -> f64 {
    let n0 = field.boundary_volume().max(p.n0_floor);
    (order_imbalance(v_prev, &p.mo) + boundary_flux(field, p)) / n0
}

/// How stable increments scale with a step shorter than one tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseTimeScaling {
    /// `ξ · dt`
    #[default]
    Linear,
    /// `ξ · dt^(1/α) · τ^(1 − 1/α)`, self-similar stable increments.
    Levy,
}

/// Velocity noise amplitude used by the Langevin closure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VelocityNoise {
    /// `σ²(v) = v0² / (n0² τ²) · [k0² tanh²(v/v0) + k_inf − k1 sech²(v/v0)]`
    #[default]
    Activity,
    /// `σ² = v0² k_inf / (n0² τ²)`, independent of `v`.
    Flat,
}

/// Rule that turns the post-market-order book into the tick's velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VelocityClosure {
    /// `v = compute_velocity(field, v_prev)`.
    Lagged,
    /// Itô relaxation `dv = (G/n0 − v) dt/τ + σ(v; n0) dW`, integrated with Euler–Maruyama
    /// substeps while `n0` and the diffusive flux `G` are held at their post-market-order values.
    Langevin {
        substeps: usize,
        #[serde(default)]
        noise: VelocityNoise,
    },
    /// Velocity held at its previous value.
    Frozen,
}

impl Default for VelocityClosure {
    fn default() -> Self {
        VelocityClosure::Langevin { substeps: 10, noise: VelocityNoise::Activity }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepConfig {
    pub dt: f64,
    #[serde(default)]
    pub closure: VelocityClosure,
    #[serde(default)]
    pub noise_scaling: NoiseTimeScaling,
}

impl StepConfig {
    pub fn lagged(dt: f64) -> Self {
        StepConfig { dt, closure: VelocityClosure::Lagged, noise_scaling: NoiseTimeScaling::Linear }
    }
}

/// Everything that happened during one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub v: f64,
    pub n0: f64,
    pub mo_buy: f64,
    pub mo_sell: f64,
    pub delta_bid: Vec<f64>,
    pub delta_ask: Vec<f64>,
    #[serde(default)]
    pub spill_bid: f64,
    #[serde(default)]
    pub spill_ask: f64,
    #[serde(default)]
    pub log_price: f64,
}

#[derive(Debug, Clone)]
struct ActivityCache {
    k0: [Vec<f64>; 2],
    k_inf: Vec<f64>,
    k1: Vec<f64>,
    v0: Vec<f64>,
    uniform_v0: Option<f64>,
}

/// Precomputed per-cell coefficients for a fixed lattice, parameter set and step size.
#[derive(Debug, Clone)]
pub struct Stepper {
    params: ModelParams,
    config: StepConfig,
    cells: usize,
    dx: f64,
    sigma_in: Vec<f64>,
    sigma_out: Vec<f64>,
    diffusion: [Vec<f64>; 2],
    activity: Option<ActivityCache>,
    noise: OneSidedStable,
    noise_factor: f64,
    has_diffusion: bool,
}

fn side_index(side: Side) -> usize {
    match side {
        Side::Bid => 0,
        Side::Ask => 1,
    }
}

impl Stepper {
    pub fn new(params: ModelParams, config: StepConfig, cells: usize, dx: f64) -> Result<Self> {
        params.validate_on(cells, dx)?;
        let dt = config.dt;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::config(format!("step dt must be > 0, got {dt}")));
        }
        if dt > params.tau * (1.0 + 1e-12) {
            return Err(Error::config(format!("step dt = {dt} exceeds the tick tau = {}", params.tau)));
        }
        if let VelocityClosure::Langevin { substeps, .. } = config.closure {
            if substeps == 0 {
                return Err(Error::config("Langevin closure needs at least one substep"));
            }
        }
        let xs: Vec<f64> = (0..cells).map(|i| i as f64 * dx).collect();
        let eval = |p: &crate::Profile| xs.iter().map(|&x| p.eval(x)).collect::<Vec<_>>();
        let diffusion = [eval(params.diffusion_for(Side::Bid)), eval(params.diffusion_for(Side::Ask))];
        let d_max = diffusion.iter().flatten().fold(0.0_f64, |m, &d| m.max(d));
        let lambda = d_max * dt / (dx * dx);
        if lambda > DIFFUSION_STABILITY_LIMIT {
            return Err(Error::config(format!(
                "diffusion stability bound violated: max D·dt/dx² = {lambda:.6} > {DIFFUSION_STABILITY_LIMIT}"
            )));
        }
        let activity = params.activity.as_ref().map(|a| {
            let k0 = eval(&a.k0_in);
            let v0 = eval(&a.v0_in);
            let uniform_v0 = v0.iter().all(|&v| v == v0[0]).then_some(v0[0]);
            ActivityCache { k0: [k0.clone(), k0], k_inf: eval(&a.k_inf_in), k1: eval(&a.k1_in), v0, uniform_v0 }
        });
        let noise = OneSidedStable::new(params.stable)?;
        let alpha = params.stable.alpha;
        let noise_factor = match config.noise_scaling {
            NoiseTimeScaling::Linear => dt,
            NoiseTimeScaling::Levy => dt.powf(1.0 / alpha) * params.tau.powf(1.0 - 1.0 / alpha),
        };
        Ok(Stepper {
            sigma_in: eval(&params.sigma_in),
            sigma_out: eval(&params.sigma_out),
            has_diffusion: d_max > 0.0,
            diffusion,
            activity,
            noise,
            noise_factor,
            params,
            config,
            cells,
            dx,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn config(&self) -> &StepConfig {
        &self.config
    }

    /// Multiplier applied to each stable draw: `dt` or its Lévy-scaled counterpart.
    pub fn noise_factor(&self) -> f64 {
        self.noise_factor
    }

    /// Mean of one capped stable draw.
    pub fn noise_mean(&self) -> f64 {
        self.noise.truncated_mean()
    }

    fn check_field(&self, field: &OrderBookField) -> Result<()> {
        if field.cells() != self.cells || field.ask.len() != self.cells || field.dx != self.dx {
            return Err(Error::domain(format!(
                "field lattice ({} cells, dx = {}) does not match the stepper ({} cells, dx = {})",
                field.cells(),
                field.dx,
                self.cells,
                self.dx
            )));
        }
        Ok(())
    }

    fn diffuse(&self, n: &mut [f64], d: &[f64]) {
        let lambda = self.config.dt / (self.dx * self.dx);
        let mut left_flux = 0.0;
        for i in 0..n.len() {
            let right_flux = if i + 1 < n.len() { lambda * (d[i + 1] * n[i + 1] - d[i] * n[i]) } else { 0.0 };
            // n[i] was read for right_flux before the update below
            let old = n[i];
            n[i] = (old + right_flux - left_flux).max(0.0);
            left_flux = right_flux;
        }
    }

    fn placement_scales(&self, side: Side, v: f64, out: &mut [f64]) {
        match &self.activity {
            None => out.copy_from_slice(&self.sigma_in),
            Some(a) => {
                let k0 = &a.k0[side_index(side)];
                let sign = side.sign();
                if let Some(v0) = a.uniform_v0 {
                    let z = v / v0;
                    let (t, s) = (z.tanh(), sech(z));
                    for i in 0..out.len() {
                        out[i] = ((sign * k0[i] * t + a.k_inf[i] - a.k1[i] * s) * v0).max(0.0);
                    }
                } else {
                    for i in 0..out.len() {
                        out[i] = activity_value(v, sign, k0[i], a.k_inf[i], a.k1[i], a.v0[i]);
                    }
                }
            }
        }
    }

    fn velocity_variance(&self, v: f64, n0: f64, noise: VelocityNoise) -> f64 {
        let mo = &self.params.mo;
        let tau = self.params.tau;
        let bracket = match noise {
            VelocityNoise::Activity => activity_bracket(v, mo.k0, mo.k_inf, mo.k1, mo.v0),
            VelocityNoise::Flat => mo.k_inf,
        };
        (mo.v0 * mo.v0 / (n0 * n0 * tau * tau) * bracket).max(0.0)
    }

    /// Advances `field` by one step of length `dt` starting from velocity `v_prev`.
    pub fn step<R: Rng + ?Sized>(&self, field: &mut OrderBookField, v_prev: f64, rng: &mut R) -> Result<StepRecord> {
        self.check_field(field)?;
        let p = &self.params;
        let dt = self.config.dt;
        let before_bid = field.bid.clone();
        let before_ask = field.ask.clone();

        if self.has_diffusion {
            self.diffuse(&mut field.bid, &self.diffusion[0]);
            self.diffuse(&mut field.ask, &self.diffusion[1]);
        }

        let mut scales = vec![0.0; self.cells];
        for side in Side::BOTH {
            self.placement_scales(side, v_prev, &mut scales);
            let n = field.side_mut(side);
            for (cell, &s) in n.iter_mut().zip(&scales) {
                if s > 0.0 {
                    *cell += s * self.noise.sample(rng) * self.noise_factor;
                }
            }
        }

        for side in Side::BOTH {
            let n = field.side_mut(side);
            for (cell, &rate) in n.iter_mut().zip(&self.sigma_out) {
                if rate > 0.0 {
                    let zeta = self.noise.sample(rng);
                    *cell = (*cell - rate * *cell * zeta * self.noise_factor).max(0.0);
                }
            }
        }

        let (buy, sell) = market_order_rate(v_prev, &p.mo);
        let tick_fraction = dt / p.tau;
        let mo_buy = (buy * tick_fraction).min(field.ask[0]);
        let mo_sell = (sell * tick_fraction).min(field.bid[0]);
        field.ask[0] -= mo_buy;
        field.bid[0] -= mo_sell;

        let (v, displacement) = match self.config.closure {
            VelocityClosure::Lagged => {
                let v = compute_velocity(field, v_prev, p);
                (v, v * dt)
            }
            VelocityClosure::Frozen => (v_prev, v_prev * dt),
            VelocityClosure::Langevin { substeps, noise } => {
                let n0 = field.boundary_volume().max(p.n0_floor);
                let target = boundary_flux(field, p) / n0;
                let h = dt / substeps as f64;
                let relax = h / p.tau;
                let sqrt_h = h.sqrt();
                let mut v = v_prev;
                let mut disp = 0.0;
                for _ in 0..substeps {
                    let z: f64 = StandardNormal.sample(rng);
                    let next = v + (target - v) * relax + self.velocity_variance(v, n0, noise).sqrt() * sqrt_h * z;
                    disp += 0.5 * (v + next) * h;
                    v = next;
                }
                (v, disp)
            }
        };
        if !v.is_finite() {
            return Err(Error::numeric(format!("velocity became non-finite at t = {}", field.t + dt)));
        }
        let spill = field.shift_boundary(displacement)?;
        field.t += dt;

        let delta = |after: &[f64], before: &[f64]| after.iter().zip(before).map(|(a, b)| a - b).collect();
        Ok(StepRecord {
            t: field.t,
            v,
            n0: field.boundary_volume(),
            mo_buy,
            mo_sell,
            delta_bid: delta(&field.bid, &before_bid),
            delta_ask: delta(&field.ask, &before_ask),
            spill_bid: spill.bid,
            spill_ask: spill.ask,
            log_price: field.log_price,
        })
    }
}

/// Single step with the lagged closure and linear noise scaling.
pub fn step<R: Rng + ?Sized>(
    field: &OrderBookField,
    v_prev: f64,
    p: &ModelParams,
    dt: f64,
    rng: &mut R,
) -> Result<(OrderBookField, StepRecord)> {
    let stepper = Stepper::new(p.clone(), StepConfig::lagged(dt), field.cells(), field.dx)?;
    let mut next = field.clone();
    let record = stepper.step(&mut next, v_prev, rng)?;
    Ok((next, record))
}

/// Lattice geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub cells: usize,
    pub dx: f64,
}

/// Everything needed to start a run except the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub params: ModelParams,
    pub step: StepConfig,
    pub grid: GridSpec,
    /// Initial volume profile of both sides (bid side only when `initial_ask` is set).
    pub initial: crate::Profile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_ask: Option<crate::Profile>,
    #[serde(default)]
    pub initial_velocity: f64,
}

impl RunSpec {
    pub fn initial_field(&self) -> Result<OrderBookField> {
        let ask = self.initial_ask.as_ref().unwrap_or(&self.initial);
        OrderBookField::with_sides(self.grid.cells, self.grid.dx, |x| self.initial.eval(x), |x| ask.eval(x))
    }

    pub fn simulation(&self, seed: u64) -> Result<Simulation> {
        Ok(Simulation::new(self.params.clone(), self.step, self.initial_field()?, seed)?
            .with_velocity(self.initial_velocity))
    }
}

/// A seeded run: field, velocity and random stream advanced together.
#[derive(Debug, Clone)]
pub struct Simulation {
    stepper: Stepper,
    field: OrderBookField,
    v: f64,
    rng: ChaCha8Rng,
}

impl Simulation {
    pub fn new(params: ModelParams, config: StepConfig, field: OrderBookField, seed: u64) -> Result<Self> {
        field.validate()?;
        let stepper = Stepper::new(params, config, field.cells(), field.dx)?;
        Ok(Simulation { stepper, field, v: 0.0, rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    pub fn with_velocity(mut self, v: f64) -> Self {
        self.v = v;
        self
    }

    pub fn field(&self) -> &OrderBookField {
        &self.field
    }

    pub fn velocity(&self) -> f64 {
        self.v
    }

    pub fn stepper(&self) -> &Stepper {
        &self.stepper
    }

    pub fn step(&mut self) -> Result<StepRecord> {
        let rec = self.stepper.step(&mut self.field, self.v, &mut self.rng)?;
        self.v = rec.v;
        Ok(rec)
    }

    /// Runs `steps` ticks, handing each record and the updated field to `visit`.
    pub fn run<F>(&mut self, steps: usize, mut visit: F) -> Result<()>
    where
        F: FnMut(&StepRecord, &OrderBookField),
    {
        for _ in 0..steps {
            let rec = self.step()?;
            visit(&rec, &self.field);
        }
        Ok(())
    }

    /// Runs `steps` ticks and keeps every record.
    pub fn collect(&mut self, steps: usize) -> Result<Vec<StepRecord>> {
        let mut out = Vec::with_capacity(steps);
        self.run(steps, |r, _| out.push(r.clone()))?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stable_noise::StableParams;
    use crate::Profile;

    fn quiet_params() -> ModelParams {
        ModelParams {
            stable: StableParams::default(),
            sigma_in: Profile::constant(0.0),
            sigma_out: Profile::constant(0.0),
            diffusion: Profile::constant(0.0),
            diffusion_ask: None,
            mo: MarketOrderParams { k0: 0.0, k_inf: 0.0, k1: 0.0, v0: 1e-3 },
            activity: None,
            tau: 1.0,
            n0_floor: 1e-6,
        }
    }

    #[test]
    fn market_orders_vanish_at_rest_when_k1_equals_k_inf() {
        let p = MarketOrderParams { k0: 2.0, k_inf: 1.5, k1: 1.5, v0: 0.1 };
        assert_eq!(market_order_rate(0.0, &p), (0.0, 0.0));
    }

    #[test]
    fn market_order_asymptotes() {
        let p = MarketOrderParams { k0: 2.0, k_inf: 1.0, k1: 0.5, v0: 0.1 };
        let (b, s) = market_order_rate(1e3, &p);
        assert!((b - 3.0 * 0.1).abs() < 1e-12);
        assert_eq!(s, 0.0);
        let (b, s) = market_order_rate(-1e3, &p);
        assert_eq!(b, 0.0);
        assert!((s - 0.3).abs() < 1e-12);
    }

    #[test]
    fn imbalance_values() {
        let p = MarketOrderParams { k0: 2.0, k_inf: 1.0, k1: 0.5, v0: 0.1 };
        assert_eq!(order_imbalance(0.0, &p), 0.0);
        assert!((order_imbalance(0.1, &p) - 2.0 * 2.0 * 0.1 * 1f64.tanh()).abs() < 1e-15);
        assert!((order_imbalance(1e-9, &p) / 1e-9 - 4.0).abs() < 1e-6);
    }

    #[test]
    fn placement_matches_market_order_shape() {
        let a = PlacementActivityParams {
            k0_in: Profile::constant(2.0),
            k_inf_in: Profile::constant(1.0),
            k1_in: Profile::constant(0.5),
            v0_in: Profile::constant(0.1),
        };
        let mo = MarketOrderParams { k0: 2.0, k_inf: 1.0, k1: 0.5, v0: 0.1 };
        for i in -20..=20 {
            let v = i as f64 * 0.02;
            let (b, s) = market_order_rate(v, &mo);
            assert!((placement_scale(0.3, v, Side::Bid, &a) - b).abs() < 1e-15);
            assert!((placement_scale(0.3, v, Side::Ask, &a) - s).abs() < 1e-15);
        }
    }

    #[test]
    fn velocity_definition() {
        let mut p = quiet_params();
        p.mo = MarketOrderParams { k0: 3.0, k_inf: 1.0, k1: 1.0, v0: 0.01 };
        let f = OrderBookField::new(8, 0.1, |_| 2.0).unwrap();
        assert_eq!(compute_velocity(&f, 0.0, &p), 0.0);
        let v_prev = 0.004;
        let j = order_imbalance(v_prev, &p.mo);
        assert!((compute_velocity(&f, v_prev, &p) - j / 4.0).abs() < 1e-18);
    }

    #[test]
    fn all_generators_off_leaves_field_alone() {
        let p = quiet_params();
        let f = OrderBookField::new(16, 0.01, |x| 1.0 + x).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (g, rec) = step(&f, 0.0, &p, 1.0, &mut rng).unwrap();
        assert_eq!(g.bid, f.bid);
        assert_eq!(g.ask, f.ask);
        assert_eq!(rec.v, 0.0);
        assert!(rec.delta_bid.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn diffusion_keeps_uniform_field() {
        let mut p = quiet_params();
        p.diffusion = Profile::constant(1e-5);
        let f = OrderBookField::new(16, 0.01, |_| 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (g, _) = step(&f, 0.0, &p, 1.0, &mut rng).unwrap();
        assert_eq!(g.bid, f.bid);
    }

    #[test]
    fn unstable_diffusion_rejected_before_mutation() {
        let mut p = quiet_params();
        p.diffusion = Profile::constant(1.0);
        let f = OrderBookField::new(16, 0.01, |_| 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(step(&f, 0.0, &p, 1.0, &mut rng), Err(Error::Config(_))));
    }

    #[test]
    fn dt_above_tick_rejected() {
        let p = quiet_params();
        assert!(matches!(
            Stepper::new(p, StepConfig::lagged(2.0), 8, 0.1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn market_orders_clamp_at_boundary_volume() {
        let mut p = quiet_params();
        p.mo = MarketOrderParams { k0: 0.0, k_inf: 100.0, k1: 0.0, v0: 1.0 };
        let f = OrderBookField::new(8, 0.1, |_| 1.0).unwrap();
        let stepper =
            Stepper::new(p, StepConfig { closure: VelocityClosure::Frozen, ..StepConfig::lagged(1.0) }, 8, 0.1)
                .unwrap();
        let mut g = f.clone();
        let rec = stepper.step(&mut g, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(rec.mo_buy, 1.0);
        assert_eq!(rec.mo_sell, 1.0);
        assert_eq!(g.boundary_volume(), 0.0);
    }
}
