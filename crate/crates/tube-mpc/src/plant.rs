//! Ground-truth pendulum simulation.
//!
//! The plant is the only place the true drag coefficient lives; every
//! controller works from its own nominal model. Model mismatch is
//! created exclusively through `drag_true` vs the controller's nominal
//! drag and through the injected disturbance, so identification
//! experiments have an unambiguous ground truth.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlantError {
    #[error("non-finite input to {context}: {value}")]
    NonFinite { context: &'static str, value: f64 },
    #[error("invalid pendulum parameters: {0}")]
    InvalidParams(String),
}

/// Physical parameters of the simulated pendulum.
///
/// `drag_true` is the plant-side drag coefficient in kg·m² (torque per
/// (rad/s)²); controllers never see it directly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendulumParams {
    /// Inertia about the axis of rotation, kg·m².
    pub inertia: f64,
    /// Lever arm at which the input force acts, m.
    pub lever: f64,
    /// Distance from the axis to the center of mass, m.
    pub com_distance: f64,
    /// Pendulum mass, kg.
    pub mass: f64,
    /// Gravitational acceleration, m/s².
    pub gravity: f64,
    /// True quadratic drag coefficient, kg·m².
    pub drag_true: f64,
}

impl PendulumParams {
    /// Bare arm, no attachments (CAD values).
    pub fn preset_none() -> Self {
        Self {
            inertia: 4.2e-3,
            lever: 0.23,
            com_distance: 9.21e-2,
            mass: 0.218,
            gravity: 9.81,
            drag_true: 0.204e-3,
        }
    }

    /// Flat plate attachment; highest drag-to-inertia ratio, the
    /// default configuration.
    pub fn preset_plate() -> Self {
        Self {
            inertia: 6.9e-3,
            lever: 0.23,
            com_distance: 2.17e-2,
            mass: 0.309,
            gravity: 9.81,
            drag_true: 0.46e-3,
        }
    }

    /// Scoop attachment, highest absolute drag.
    pub fn preset_scoop() -> Self {
        Self {
            inertia: 7.6e-3,
            lever: 0.23,
            com_distance: 0.49e-2,
            mass: 0.343,
            gravity: 9.81,
            drag_true: 0.55e-3,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "none" => Some(Self::preset_none()),
            "plate" | "flat-plate" => Some(Self::preset_plate()),
            "scoop" => Some(Self::preset_scoop()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        let positive = [
            ("inertia", self.inertia),
            ("lever", self.lever),
            ("com_distance", self.com_distance),
            ("mass", self.mass),
            ("gravity", self.gravity),
        ];
        for (name, v) in positive {
            if !v.is_finite() || v <= 0.0 {
                return Err(PlantError::InvalidParams(format!("{name} must be > 0, got {v}")));
            }
        }
        if !self.drag_true.is_finite() || self.drag_true < 0.0 {
            return Err(PlantError::InvalidParams(format!(
                "drag_true must be >= 0, got {}",
                self.drag_true
            )));
        }
        if self.com_distance > self.lever {
            return Err(PlantError::InvalidParams(format!(
                "com_distance ({}) exceeds lever ({})",
                self.com_distance, self.lever
            )));
        }
        Ok(())
    }

    /// Gravity stiffness L_cm·m·g/I, the squared small-angle frequency.
    pub fn gravity_accel(&self) -> f64 {
        self.com_distance * self.mass * self.gravity / self.inertia
    }
}

/// Instantaneous plant state; the angle is unwrapped and unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub theta: f64,
    pub theta_dot: f64,
    pub t: f64,
}

impl PlantState {
    pub fn at_rest(theta: f64) -> Self {
        Self { theta, theta_dot: 0.0, t: 0.0 }
    }
}

/// One angular band of the disturbance map with its scale factor on the
/// regional bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceRegion {
    pub lo: f64,
    pub hi: f64,
    /// Scale factor in [0, 1] applied to `region_bound` inside the band.
    pub scale: f64,
}

/// State-dependent disturbance description.
///
/// The realized disturbance is `r0·base_bound + r1·scale(θ)·region_bound`
/// with `r0, r1 ~ U(-1, 1)` held between resamples. The base component is
/// angle-independent background noise; the regional component follows the
/// band map and vanishes outside all bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceSpec {
    pub regions: Vec<DisturbanceRegion>,
    /// Peak regional magnitude, rad/s².
    pub region_bound: f64,
    /// Angle-independent background magnitude, rad/s².
    pub base_bound: f64,
    /// Rate at which the uniform draws are refreshed, Hz.
    pub resample_hz: f64,
    pub seed: u64,
}

impl DisturbanceSpec {
    pub fn quiet(seed: u64) -> Self {
        Self { regions: Vec::new(), region_bound: 0.0, base_bound: 0.0, resample_hz: 500.0, seed }
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        for r in &self.regions {
            if !(0.0..=1.0).contains(&r.scale) {
                return Err(PlantError::InvalidParams(format!(
                    "disturbance scale {} outside [0,1]",
                    r.scale
                )));
            }
            if r.lo > r.hi {
                return Err(PlantError::InvalidParams("disturbance band lo > hi".into()));
            }
        }
        if self.region_bound < 0.0 || self.base_bound < 0.0 || self.resample_hz <= 0.0 {
            return Err(PlantError::InvalidParams("disturbance bounds/rate invalid".into()));
        }
        Ok(())
    }

    /// Scale factor at `theta`: the largest scale among containing bands,
    /// zero outside all of them.
    pub fn scale_at(&self, theta: f64) -> f64 {
        self.regions
            .iter()
            .filter(|r| theta >= r.lo && theta <= r.hi)
            .map(|r| r.scale)
            .fold(0.0, f64::max)
    }
}

/// Regional disturbance draw: `r·scale(θ)·region_bound`, `r ~ U(-1,1)`.
pub fn sample_region_disturbance(theta: f64, spec: &DisturbanceSpec, rng: &mut ChaCha8Rng) -> f64 {
    let r: f64 = rng.gen_range(-1.0..=1.0);
    r * spec.scale_at(theta) * spec.region_bound
}

/// Stateful sampler owning the hold/resample logic. The two uniform
/// draws are refreshed together at `resample_hz` and held in between;
/// the angle-dependent scale is evaluated at every call.
#[derive(Debug, Clone)]
pub struct DisturbanceSampler {
    spec: DisturbanceSpec,
    rng: ChaCha8Rng,
    r_base: f64,
    r_region: f64,
    next_resample: f64,
}

impl DisturbanceSampler {
    pub fn new(spec: DisturbanceSpec) -> Self {
        use rand::SeedableRng;
        let rng = ChaCha8Rng::seed_from_u64(spec.seed);
        Self { spec, rng, r_base: 0.0, r_region: 0.0, next_resample: f64::NEG_INFINITY }
    }

    pub fn spec(&self) -> &DisturbanceSpec {
        &self.spec
    }

    /// Disturbance at time `t` and angle `theta`, rad/s².
    pub fn sample(&mut self, t: f64, theta: f64) -> f64 {
        if t >= self.next_resample {
            self.r_base = self.rng.gen_range(-1.0..=1.0);
            self.r_region = self.rng.gen_range(-1.0..=1.0);
            let period = 1.0 / self.spec.resample_hz;
            self.next_resample = if self.next_resample.is_finite() {
                self.next_resample + period
            } else {
                t + period
            };
        }
        self.r_base * self.spec.base_bound
            + self.r_region * self.spec.scale_at(theta) * self.spec.region_bound
    }

    /// Worst-case magnitude at `theta` regardless of the draws.
    pub fn bound_at(&self, theta: f64) -> f64 {
        self.spec.base_bound + self.spec.scale_at(theta) * self.spec.region_bound
    }
}

/// Pendulum angular acceleration under force input `u` and disturbance `d`:
/// `(L/I)·u − (C_d/I)·|θ̇|θ̇ − (L_cm·m·g/I)·sin θ + d`.
pub fn dynamics_accel(
    state: &PlantState,
    u: f64,
    d: f64,
    params: &PendulumParams,
) -> Result<f64, PlantError> {
    for (context, value) in [
        ("theta", state.theta),
        ("theta_dot", state.theta_dot),
        ("u", u),
        ("d", d),
    ] {
        if !value.is_finite() {
            return Err(PlantError::NonFinite { context, value });
        }
    }
    Ok(accel_unchecked(state.theta, state.theta_dot, u, d, params))
}

#[inline]
fn accel_unchecked(theta: f64, theta_dot: f64, u: f64, d: f64, p: &PendulumParams) -> f64 {
    (p.lever / p.inertia) * u - (p.drag_true / p.inertia) * theta_dot.abs() * theta_dot
        - p.gravity_accel() * theta.sin()
        + d
}

/// Advance the plant by `dt` with `u` and `d` held constant (zero-order
/// hold), using the classical 4th-order Runge-Kutta scheme.
pub fn integrate_step(
    state: &PlantState,
    u: f64,
    d: f64,
    dt: f64,
    params: &PendulumParams,
) -> Result<PlantState, PlantError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(PlantError::NonFinite { context: "dt", value: dt });
    }
    dynamics_accel(state, u, d, params)?;
    params.validate()?;

    let f = |th: f64, w: f64| (w, accel_unchecked(th, w, u, d, params));
    let (th, w) = (state.theta, state.theta_dot);
    let (k1t, k1w) = f(th, w);
    let (k2t, k2w) = f(th + 0.5 * dt * k1t, w + 0.5 * dt * k1w);
    let (k3t, k3w) = f(th + 0.5 * dt * k2t, w + 0.5 * dt * k2w);
    let (k4t, k4w) = f(th + dt * k3t, w + dt * k3w);
    Ok(PlantState {
        theta: th + dt / 6.0 * (k1t + 2.0 * k2t + 2.0 * k3t + k4t),
        theta_dot: w + dt / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w),
        t: state.t + dt,
    })
}

/// Total mechanical energy `½Iθ̇² − L_cm·m·g·cos θ`, conserved for the
/// undriven, undamped pendulum.
pub fn mechanical_energy(state: &PlantState, p: &PendulumParams) -> f64 {
    0.5 * p.inertia * state.theta_dot * state.theta_dot
        - p.com_distance * p.mass * p.gravity * state.theta.cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::SeedableRng;
    use std::f64::consts::PI;

    fn plate() -> PendulumParams {
        PendulumParams::preset_plate()
    }

    #[test]
    fn equilibrium_accel_is_zero() {
        let s = PlantState::at_rest(0.0);
        assert_eq!(dynamics_accel(&s, 0.0, 0.0, &plate()).unwrap(), 0.0);
    }

    #[test]
    fn gravity_accel_flat_plate_horizontal() {
        // Hand evaluation: 0.0217·0.309·9.81/0.0069 = 9.5331874.
        let s = PlantState { theta: PI / 2.0, theta_dot: 0.0, t: 0.0 };
        let a = dynamics_accel(&s, 0.0, 0.0, &plate()).unwrap();
        assert_relative_eq!(a, -9.5331874, max_relative = 1e-7);
    }

    #[test]
    fn drag_accel_flat_plate() {
        // Hand evaluation: (4.6e-4/6.9e-3)·10·10 = 20/3.
        let s = PlantState { theta: 0.0, theta_dot: 10.0, t: 0.0 };
        let a = dynamics_accel(&s, 0.0, 0.0, &plate()).unwrap();
        assert_relative_eq!(a, -20.0 / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn non_finite_inputs_rejected() {
        let s = PlantState { theta: f64::NAN, theta_dot: 0.0, t: 0.0 };
        assert!(dynamics_accel(&s, 0.0, 0.0, &plate()).is_err());
        let s = PlantState::at_rest(0.0);
        assert!(dynamics_accel(&s, f64::INFINITY, 0.0, &plate()).is_err());
    }

    #[test]
    fn equilibrium_invariant_under_integration() {
        let s = PlantState::at_rest(0.0);
        let next = integrate_step(&s, 0.0, 0.0, 0.05, &plate()).unwrap();
        assert_eq!(next.theta, 0.0);
        assert_eq!(next.theta_dot, 0.0);
        assert_abs_diff_eq!(next.t, 0.05);
    }

    #[test]
    fn undamped_small_angle_frequency() {
        // Analytic linear-pendulum frequency as the oracle.
        let mut p = plate();
        p.drag_true = 0.0;
        let omega = p.gravity_accel().sqrt();
        let period = 2.0 * PI / omega;
        let dt = 2e-3;

        let mut s = PlantState::at_rest(0.02);
        let mut crossings = Vec::new();
        while s.t < 5.2 * period {
            let next = integrate_step(&s, 0.0, 0.0, dt, &p).unwrap();
            if s.theta > 0.0 && next.theta <= 0.0 {
                // Linear interpolation of the downward zero crossing.
                let frac = s.theta / (s.theta - next.theta);
                crossings.push(s.t + frac * dt);
            }
            s = next;
        }
        assert!(crossings.len() >= 5, "expected at least 5 periods");
        let measured = (crossings[crossings.len() - 1] - crossings[0])
            / (crossings.len() - 1) as f64;
        assert_relative_eq!(measured, period, max_relative = 5e-3);
    }

    #[test]
    fn integrator_local_error_order() {
        // Halving the step shrinks the two-half-steps-vs-one gap ~16x.
        let p = plate();
        let s = PlantState { theta: 0.7, theta_dot: 3.0, t: 0.0 };
        let gap = |h: f64| {
            let full = integrate_step(&s, 0.4, 0.0, h, &p).unwrap();
            let half = integrate_step(&s, 0.4, 0.0, h / 2.0, &p).unwrap();
            let half2 = integrate_step(&half, 0.4, 0.0, h / 2.0, &p).unwrap();
            ((full.theta - half2.theta).powi(2) + (full.theta_dot - half2.theta_dot).powi(2))
                .sqrt()
        };
        let g1 = gap(0.02);
        let g2 = gap(0.01);
        let ratio = g1 / g2;
        assert!(
            (8.0..64.0).contains(&ratio),
            "expected ~16x reduction for a 4th-order scheme, got {ratio}"
        );
    }

    #[test]
    fn energy_conserved_without_drive_or_drag() {
        let mut p = plate();
        p.drag_true = 0.0;
        let dt = 2e-3;
        let mut s = PlantState { theta: 1.0, theta_dot: 0.0, t: 0.0 };
        let e0 = mechanical_energy(&s, &p);
        while s.t < 10.0 {
            s = integrate_step(&s, 0.0, 0.0, dt, &p).unwrap();
        }
        let drift = ((mechanical_energy(&s, &p) - e0) / e0).abs() / s.t;
        assert!(drift < 1e-6, "relative energy drift {drift}/s");
    }

    fn band_spec(seed: u64) -> DisturbanceSpec {
        DisturbanceSpec {
            regions: vec![
                DisturbanceRegion { lo: 1.5 * PI, hi: 2.0 * PI, scale: 0.5 },
                DisturbanceRegion { lo: 2.0 * PI, hi: 3.0 * PI, scale: 1.0 },
                DisturbanceRegion { lo: 3.0 * PI, hi: 3.5 * PI, scale: 0.5 },
            ],
            region_bound: 20.0,
            base_bound: 0.0,
            resample_hz: 500.0,
            seed,
        }
    }

    #[test]
    fn region_sampler_respects_band_map() {
        let spec = band_spec(7);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..512 {
            assert_eq!(sample_region_disturbance(0.3, &spec, &mut rng), 0.0);
            let full = sample_region_disturbance(2.5 * PI, &spec, &mut rng);
            assert!(full.abs() <= 20.0);
            let half = sample_region_disturbance(1.75 * PI, &spec, &mut rng);
            assert!(half.abs() <= 10.0);
        }
    }

    #[test]
    fn sampler_holds_between_resamples() {
        let mut spec = band_spec(11);
        spec.resample_hz = 50.0;
        let mut sampler = DisturbanceSampler::new(spec);
        let theta = 2.5 * PI;
        let first = sampler.sample(0.0, theta);
        // Within one 20 ms hold window the draw must not change.
        for k in 1..9 {
            assert_eq!(sampler.sample(k as f64 * 2e-3, theta), first);
        }
        let later = sampler.sample(0.020, theta);
        assert_ne!(later, first);
    }

    #[test]
    fn sampler_deterministic_per_seed() {
        let run = |seed| {
            let mut s = DisturbanceSampler::new(DisturbanceSpec {
                base_bound: 5.0,
                ..band_spec(seed)
            });
            (0..200).map(|k| s.sample(k as f64 * 2e-3, 0.1 * k as f64)).collect::<Vec<_>>()
        };
        assert_eq!(run(42), run(42));
        assert_ne!(run(42), run(43));
    }

    #[test]
    fn preset_lookup() {
        assert!(PendulumParams::preset("plate").is_some());
        assert!(PendulumParams::preset("none").is_some());
        assert!(PendulumParams::preset("scoop").is_some());
        assert!(PendulumParams::preset("rocket").is_none());
        for name in ["none", "plate", "scoop"] {
            PendulumParams::preset(name).unwrap().validate().unwrap();
        }
    }
}
