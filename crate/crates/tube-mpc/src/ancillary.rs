//! Boundary-layer sliding controller and tube algebra.
//!
//! The ancillary policy tracks a planned trajectory by driving the
//! sliding variable `s = θ̇̃ + λθ̃` into a boundary layer of thickness
//! `Φ`. The layer and the tube radius `Ω` obey first-order filters
//!
//! ```text
//!   Φ̇ = −αΦ + Δ + D + η        Ω̇ = −λΩ + Φ
//! ```
//!
//! whose bandwidth `α` doubles as the feedback gain through `K = αΦ`.
//! The same algebra yields the constraint-tightening terms the planners
//! subtract from the hardware limits.

use crate::plant::{DisturbanceSpec, PendulumParams, PlantState};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AncillaryError {
    #[error("boundary layer must be positive, got {0}")]
    NonPositiveLayer(f64),
    #[error("tightened {what} bound is not positive: margin {margin}")]
    InfeasibleTightening { what: &'static str, margin: f64 },
}

/// Sliding-controller gains shared by the executor and the planners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerGains {
    /// Sliding-surface time constant λ, 1/s.
    pub lambda: f64,
    /// Convergence rate toward the surface η, rad/s².
    pub eta: f64,
    /// Control bandwidth bounds, 1/s.
    pub alpha_min: f64,
    pub alpha_max: f64,
    /// Bandwidth rate bound, 1/s².
    pub alpha_rate_max: f64,
}

impl ControllerGains {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.lambda > 0.0 && self.eta > 0.0) {
            return Err("lambda and eta must be positive".into());
        }
        if !(0.0 < self.alpha_min && self.alpha_min <= self.alpha_max) {
            return Err("need 0 < alpha_min <= alpha_max".into());
        }
        if self.alpha_rate_max <= 0.0 {
            return Err("alpha_rate_max must be positive".into());
        }
        Ok(())
    }
}

/// Measured geometry of the arm; everything the controller trusts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NominalParams {
    pub inertia: f64,
    pub lever: f64,
    pub com_distance: f64,
    pub mass: f64,
    pub gravity: f64,
}

impl NominalParams {
    pub fn from_plant(p: &PendulumParams) -> Self {
        Self {
            inertia: p.inertia,
            lever: p.lever,
            com_distance: p.com_distance,
            mass: p.mass,
            gravity: p.gravity,
        }
    }

    /// L_cm·m·g/I.
    pub fn gravity_accel(&self) -> f64 {
        self.com_distance * self.mass * self.gravity / self.inertia
    }

    /// I/L, the force-per-acceleration factor.
    pub fn force_per_accel(&self) -> f64 {
        self.inertia / self.lever
    }
}

/// One band of the planner-side disturbance envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct EnvelopeBand {
    lo: f64,
    hi: f64,
    mag: f64,
}

/// Piecewise-linear upper envelope of the exogenous regional
/// disturbance, as anticipated by the planner.
///
/// Bands are widened outward by `widen` (so the envelope still covers
/// the true band when the plant sits anywhere inside the tube) and
/// ramped linearly to zero over `ramp`, which keeps the boundary-layer
/// drive differentiable almost everywhere for the SCP linearization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionEnvelope {
    bands: Vec<EnvelopeBand>,
    widen: f64,
    ramp: f64,
}

impl RegionEnvelope {
    pub fn none() -> Self {
        Self { bands: Vec::new(), widen: 0.0, ramp: 1e-3 }
    }

    pub fn from_disturbance(spec: &DisturbanceSpec, widen: f64, ramp: f64) -> Self {
        let bands = spec
            .regions
            .iter()
            .filter(|r| r.scale > 0.0)
            .map(|r| EnvelopeBand { lo: r.lo, hi: r.hi, mag: r.scale * spec.region_bound })
            .collect();
        Self { bands, widen, ramp: ramp.max(1e-6) }
    }

    /// Envelope value at `theta`.
    pub fn value(&self, theta: f64) -> f64 {
        self.value_slope(theta).0
    }

    /// Envelope value and slope of the dominating band at `theta`.
    pub fn value_slope(&self, theta: f64) -> (f64, f64) {
        let mut best = (0.0, 0.0);
        for b in &self.bands {
            let lo = b.lo - self.widen;
            let hi = b.hi + self.widen;
            let (v, g) = if theta < lo - self.ramp || theta > hi + self.ramp {
                (0.0, 0.0)
            } else if theta < lo {
                (b.mag * (theta - (lo - self.ramp)) / self.ramp, b.mag / self.ramp)
            } else if theta > hi {
                (b.mag * ((hi + self.ramp) - theta) / self.ramp, -b.mag / self.ramp)
            } else {
                (b.mag, 0.0)
            };
            if v > best.0 {
                best = (v, g);
            }
        }
        best
    }

    pub fn max_value(&self) -> f64 {
        self.bands.iter().map(|b| b.mag).fold(0.0, f64::max)
    }

    pub fn is_empty(&self) -> bool {
        self.bands.is_empty()
    }
}

/// Controller-side uncertainty description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyModel {
    /// Nominal drag coefficient Ĉ_d, kg·m².
    pub drag_nominal: f64,
    /// Drag error bound C̃_d, kg·m².
    pub drag_error: f64,
    /// Exogenous disturbance bound D, rad/s².
    pub d_bound: f64,
    /// Nominal inertia used to convert drag torque error into angular
    /// acceleration.
    pub inertia: f64,
    /// Anticipated state-dependent regional disturbance.
    pub region: RegionEnvelope,
}

impl UncertaintyModel {
    /// Drag-induced model error bound `(C̃_d/I)·θ̇²`.
    pub fn delta_drag(&self, theta_dot: f64) -> f64 {
        self.drag_error / self.inertia * theta_dot * theta_dot
    }

    /// Total state-dependent uncertainty driving the boundary layer,
    /// evaluated at a reference point: drag error at the reference
    /// speed plus the regional envelope at the reference angle.
    pub fn delta_total(&self, theta: f64, theta_dot: f64) -> f64 {
        self.delta_drag(theta_dot) + self.region.value(theta)
    }
}

/// Instantaneous (Φ, Ω, α) triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TubeState {
    /// Boundary-layer thickness, rad/s.
    pub phi: f64,
    /// Tube radius, rad.
    pub omega: f64,
    /// Control bandwidth, 1/s.
    pub alpha: f64,
}

/// One point of a planned trajectory, including the feedforward
/// acceleration so the executor never differentiates numerically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferencePoint {
    pub theta: f64,
    pub theta_dot: f64,
    pub theta_ddot: f64,
    pub u: f64,
    pub tube: TubeState,
}

/// Sliding variable `s = (θ̇ − θ̇*) + λ(θ − θ*)`.
pub fn sliding_variable(state: &PlantState, reference: &ReferencePoint, lambda: f64) -> f64 {
    (state.theta_dot - reference.theta_dot) + lambda * (state.theta - reference.theta)
}

#[inline]
fn sat(z: f64) -> f64 {
    z.clamp(-1.0, 1.0)
}

/// Ancillary control input.
///
/// `u = u* + (I/L)[g̃(sinθ − sinθ*) + (Ĉ_d/I)(|θ̇|θ̇ − |θ̇*|θ̇*) − λθ̇̃ − K·sat(s/Φ)]`
/// with `K = αΦ`, clamped to `±u_max` as a final hardware guard.
pub fn blsc_input(
    state: &PlantState,
    reference: &ReferencePoint,
    tube: &TubeState,
    gains: &ControllerGains,
    model: &UncertaintyModel,
    nominal: &NominalParams,
    u_max: f64,
) -> Result<f64, AncillaryError> {
    if tube.phi <= 0.0 {
        return Err(AncillaryError::NonPositiveLayer(tube.phi));
    }
    let s = sliding_variable(state, reference, gains.lambda);
    let gain = tube.alpha * tube.phi;
    let w = state.theta_dot;
    let wr = reference.theta_dot;
    let correction = nominal.gravity_accel() * (state.theta.sin() - reference.theta.sin())
        + model.drag_nominal / nominal.inertia * (w.abs() * w - wr.abs() * wr)
        - gains.lambda * (w - wr)
        - gain * sat(s / tube.phi);
    let u = reference.u + nominal.force_per_accel() * correction;
    Ok(u.clamp(-u_max, u_max))
}

/// Boundary-layer dynamics `Φ̇ = −αΦ + Δ + D + η`.
pub fn phi_derivative(phi: f64, alpha: f64, delta_at_ref: f64, d_bound: f64, eta: f64) -> f64 {
    -alpha * phi + delta_at_ref + d_bound + eta
}

/// Tube-radius dynamics `Ω̇ = −λΩ + Φ`.
pub fn omega_derivative(omega: f64, phi: f64, lambda: f64) -> f64 {
    -lambda * omega + phi
}

/// Worst-case speed tracking error `θ̇̃_max = Φ + λΩ`.
pub fn speed_error_bound(phi: f64, omega: f64, lambda: f64) -> f64 {
    phi + lambda * omega
}

/// Tightened speed limit `θ̇_max − (Φ + λΩ)`.
pub fn tighten_speed(
    phi: f64,
    omega: f64,
    lambda: f64,
    speed_max: f64,
) -> Result<f64, AncillaryError> {
    let bound = speed_max - speed_error_bound(phi, omega, lambda);
    if bound <= 0.0 {
        return Err(AncillaryError::InfeasibleTightening { what: "speed", margin: bound });
    }
    Ok(bound)
}

/// Worst-case ancillary input needed to hold the tube:
/// `ũ_max = (I/L)[g̃·2sin(Ω/2) + (Ĉ_d/I)·θ̇̃_max·2θ̇_max + λθ̇̃_max + αΦ]`.
pub fn ancillary_input_bound(
    omega: f64,
    phi: f64,
    alpha: f64,
    speed_err: f64,
    speed_max: f64,
    nominal: &NominalParams,
    drag_nominal: f64,
    lambda: f64,
) -> f64 {
    nominal.force_per_accel()
        * (nominal.gravity_accel() * 2.0 * (omega / 2.0).sin()
            + drag_nominal / nominal.inertia * speed_err * 2.0 * speed_max
            + lambda * speed_err
            + alpha * phi)
}

/// Tightened input limit `u_max − ũ_max`.
#[allow(clippy::too_many_arguments)]
pub fn tighten_input(
    omega: f64,
    phi: f64,
    alpha: f64,
    speed_err: f64,
    speed_max: f64,
    nominal: &NominalParams,
    drag_nominal: f64,
    lambda: f64,
    u_max: f64,
) -> Result<f64, AncillaryError> {
    let used =
        ancillary_input_bound(omega, phi, alpha, speed_err, speed_max, nominal, drag_nominal, lambda);
    let bound = u_max - used;
    if bound <= 0.0 {
        return Err(AncillaryError::InfeasibleTightening { what: "input", margin: bound });
    }
    Ok(bound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use crate::plant::DisturbanceRegion;
    use std::f64::consts::PI;

    fn gains() -> ControllerGains {
        ControllerGains {
            lambda: 4.0,
            eta: 0.1,
            alpha_min: 40.0,
            alpha_max: 140.0,
            alpha_rate_max: 300.0,
        }
    }

    fn nominal() -> NominalParams {
        NominalParams::from_plant(&PendulumParams::preset_plate())
    }

    fn model() -> UncertaintyModel {
        UncertaintyModel {
            drag_nominal: 1.0e-3,
            drag_error: 1.0e-3,
            d_bound: 20.0,
            inertia: nominal().inertia,
            region: RegionEnvelope::none(),
        }
    }

    fn reference(theta: f64, theta_dot: f64, tube: TubeState) -> ReferencePoint {
        ReferencePoint { theta, theta_dot, theta_ddot: 0.0, u: 0.25, tube }
    }

    #[test]
    fn sliding_variable_cases() {
        let tube = TubeState { phi: 1.0, omega: 0.1, alpha: 40.0 };
        let r = reference(1.0, 2.0, tube);
        let on_track = PlantState { theta: 1.0, theta_dot: 2.0, t: 0.0 };
        assert_eq!(sliding_variable(&on_track, &r, 4.0), 0.0);

        let off = PlantState { theta: 1.1, theta_dot: 2.0, t: 0.0 };
        assert_abs_diff_eq!(sliding_variable(&off, &r, 4.0), 0.4, epsilon = 1e-12);

        let on_surface = PlantState { theta: 0.95, theta_dot: 2.2, t: 0.0 };
        assert_abs_diff_eq!(sliding_variable(&on_surface, &r, 4.0), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn blsc_reduces_to_feedforward_on_track() {
        let tube = TubeState { phi: 0.5, omega: 0.1, alpha: 60.0 };
        let r = reference(0.7, 3.0, tube);
        let s = PlantState { theta: 0.7, theta_dot: 3.0, t: 0.0 };
        let u = blsc_input(&s, &r, &tube, &gains(), &model(), &nominal(), 2.0).unwrap();
        assert_abs_diff_eq!(u, r.u, epsilon = 1e-14);
    }

    #[test]
    fn blsc_linear_inside_layer() {
        // Angle pair with equal sines and equal speeds zeroes every
        // correction term except the saturation feedback; the error
        // 2θ−π = 0.125 puts s at Φ/2.
        let tube = TubeState { phi: 1.0, omega: 0.1, alpha: 40.0 };
        let theta = (PI + 0.125) / 2.0;
        let r = reference(PI - theta, 1.5, tube);
        let s = PlantState { theta, theta_dot: 1.5, t: 0.0 };
        let sv = sliding_variable(&s, &r, 4.0);
        assert_abs_diff_eq!(sv, 0.5, epsilon = 1e-12);

        let u = blsc_input(&s, &r, &tube, &gains(), &model(), &nominal(), 5.0).unwrap();
        let expected_feedback = -nominal().force_per_accel() * 40.0 * 1.0 * 0.5;
        assert_relative_eq!(u - r.u, expected_feedback, max_relative = 1e-12);
    }

    #[test]
    fn blsc_saturates_outside_layer() {
        let tube = TubeState { phi: 1.0, omega: 0.1, alpha: 40.0 };
        // 2θ−π = 0.75 gives s = 3 with λ = 4, i.e. 3Φ.
        let theta = (PI + 0.75) / 2.0;
        let r = reference(PI - theta, 1.5, tube);
        let s = PlantState { theta, theta_dot: 1.5, t: 0.0 };
        assert_abs_diff_eq!(sliding_variable(&s, &r, 4.0), 3.0, epsilon = 1e-12);

        let u = blsc_input(&s, &r, &tube, &gains(), &model(), &nominal(), 5.0).unwrap();
        let expected = -nominal().force_per_accel() * 40.0 * 1.0;
        assert_relative_eq!(u - r.u, expected, max_relative = 1e-12);
    }

    #[test]
    fn blsc_rejects_degenerate_layer() {
        let tube = TubeState { phi: 0.0, omega: 0.0, alpha: 40.0 };
        let r = reference(0.0, 0.0, tube);
        let s = PlantState::at_rest(0.0);
        assert!(blsc_input(&s, &r, &tube, &gains(), &model(), &nominal(), 2.0).is_err());
    }

    #[test]
    fn blsc_clamps_to_hardware_limit() {
        let tube = TubeState { phi: 0.2, omega: 0.05, alpha: 140.0 };
        let r = reference(0.0, 0.0, tube);
        let s = PlantState { theta: 2.0, theta_dot: 8.0, t: 0.0 };
        let u = blsc_input(&s, &r, &tube, &gains(), &model(), &nominal(), 2.0).unwrap();
        assert!(u.abs() <= 2.0);
    }

    #[test]
    fn phi_steady_states_match_table_values() {
        // Φ_ss = (Δ + D + η)/α = 40.1/40 = 1.0025 and 40.1/140.
        assert_abs_diff_eq!(phi_derivative(1.0025, 40.0, 20.0, 20.0, 0.1), 0.0, epsilon = 1e-12);
        let phi_ss_fast = (20.0 + 20.0 + 0.1) / 140.0;
        assert_relative_eq!(phi_ss_fast, 0.28642857142857145, max_relative = 1e-12);
        assert_abs_diff_eq!(
            phi_derivative(phi_ss_fast, 140.0, 20.0, 20.0, 0.1),
            0.0,
            epsilon = 1e-12
        );
        // Above steady state the layer contracts.
        assert!(phi_derivative(1.2, 40.0, 20.0, 20.0, 0.1) < 0.0);
    }

    #[test]
    fn omega_steady_state_is_phi_over_lambda() {
        let phi = PI / 6.0; // λΩ_max for the 7.5° tube
        assert_abs_diff_eq!(omega_derivative(phi / 4.0, phi, 4.0), 0.0, epsilon = 1e-15);
        assert_relative_eq!(phi / 4.0, 7.5_f64.to_radians(), max_relative = 1e-12);
        assert!(omega_derivative(0.0, 1.0, 4.0) > 0.0);
    }

    #[test]
    fn tube_odes_match_closed_form() {
        // Piecewise-constant drives admit explicit first-order-filter
        // solutions; a fine RK4 pass must agree to 1e-8.
        let (alpha, delta, d, eta) = (55.0, 12.0, 20.0, 0.1);
        let phi_ss = (delta + d + eta) / alpha;
        let mut phi = 1.3_f64;
        let h = 1e-4;
        let steps = 10_000;
        for _ in 0..steps {
            let k1 = phi_derivative(phi, alpha, delta, d, eta);
            let k2 = phi_derivative(phi + 0.5 * h * k1, alpha, delta, d, eta);
            let k3 = phi_derivative(phi + 0.5 * h * k2, alpha, delta, d, eta);
            let k4 = phi_derivative(phi + h * k3, alpha, delta, d, eta);
            phi += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        let t = h * steps as f64;
        let exact = phi_ss + (1.3 - phi_ss) * (-alpha * t).exp();
        assert_abs_diff_eq!(phi, exact, epsilon = 1e-8);

        let (lambda, phi_c) = (4.0, 0.6);
        let mut omega = 0.02_f64;
        for _ in 0..steps {
            let k1 = omega_derivative(omega, phi_c, lambda);
            let k2 = omega_derivative(omega + 0.5 * h * k1, phi_c, lambda);
            let k3 = omega_derivative(omega + 0.5 * h * k2, phi_c, lambda);
            let k4 = omega_derivative(omega + h * k3, phi_c, lambda);
            omega += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        let exact = phi_c / lambda + (0.02 - phi_c / lambda) * (-lambda * t).exp();
        assert_abs_diff_eq!(omega, exact, epsilon = 1e-8);
    }

    #[test]
    fn tighten_speed_table_values() {
        let phi = PI / 6.0;
        let omega = PI / 24.0;
        let bound = tighten_speed(phi, omega, 4.0, 15.0).unwrap();
        // 15 − π/3 computed by hand.
        assert_relative_eq!(bound, 13.952802448803402, max_relative = 1e-12);
        assert_relative_eq!(speed_error_bound(phi, omega, 4.0), PI / 3.0, max_relative = 1e-14);

        assert_abs_diff_eq!(tighten_speed(0.0, 0.0, 4.0, 15.0).unwrap(), 15.0);
        assert!(tighten_speed(10.0, 2.0, 4.0, 15.0).is_err());
    }

    #[test]
    fn tighten_input_zero_tube_is_identity() {
        let b = tighten_input(0.0, 0.0, 76.0, 0.0, 15.0, &nominal(), 1.0e-3, 4.0, 2.0).unwrap();
        assert_abs_diff_eq!(b, 2.0, epsilon = 1e-15);
    }

    #[test]
    fn tighten_input_pinned_value() {
        // Hand evaluation with Ω = 7.5°, Φ = λΩ, α = 40.1/Φ, θ̇̃ = π/3:
        //   (I/L)[9.5331874·2sin(Ω/2) + 0.14492754·(π/3)·30 + 4π/3 + 40.1]
        // = 0.03·50.0888236 = 1.5026647.
        let omega = 7.5_f64.to_radians();
        let phi = 4.0 * omega;
        let alpha = 40.1 / phi;
        let err = speed_error_bound(phi, omega, 4.0);
        let used = ancillary_input_bound(omega, phi, alpha, err, 15.0, &nominal(), 1.0e-3, 4.0);
        assert_abs_diff_eq!(used, 1.5026647, epsilon = 1e-6);
        let bound = tighten_input(omega, phi, alpha, err, 15.0, &nominal(), 1.0e-3, 4.0, 2.0).unwrap();
        assert_abs_diff_eq!(bound, 2.0 - 1.5026647, epsilon = 1e-6);
    }

    #[test]
    fn tighten_input_linear_in_alpha() {
        let omega = 0.1309;
        let phi = 0.5236;
        let err = speed_error_bound(phi, omega, 4.0);
        let at = |alpha: f64| {
            ancillary_input_bound(omega, phi, alpha, err, 15.0, &nominal(), 1.0e-3, 4.0)
        };
        let delta = at(80.0) - at(40.0);
        assert_relative_eq!(delta, nominal().force_per_accel() * 40.0 * phi, max_relative = 1e-12);
    }

    #[test]
    fn blsc_is_lipschitz_in_state() {
        // No chattering: nearby states map to nearby inputs, with a
        // constant assembled from the term-by-term derivatives.
        let tube = TubeState { phi: 0.4, omega: 0.1, alpha: 90.0 };
        let r = reference(1.2, 5.0, tube);
        let n = nominal();
        let m = model();
        let g = gains();
        let w_max = 16.0;
        let lip_theta = n.force_per_accel()
            * (n.gravity_accel() + tube.alpha * g.lambda + g.lambda * g.lambda); // sat slope ≤ 1/Φ
        let lip_w = n.force_per_accel()
            * (m.drag_nominal / n.inertia * 2.0 * w_max + g.lambda + tube.alpha + 1.0);
        let lip = lip_theta.max(lip_w) * 2.0;

        let mut rng_state = 0x9E3779B97F4A7C15u64;
        let mut next = || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (rng_state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..500 {
            let th = 1.2 + (next() - 0.5) * 0.4;
            let w = 5.0 + (next() - 0.5) * 2.0;
            let dth = (next() - 0.5) * 1e-3;
            let dw = (next() - 0.5) * 1e-3;
            let s1 = PlantState { theta: th, theta_dot: w, t: 0.0 };
            let s2 = PlantState { theta: th + dth, theta_dot: w + dw, t: 0.0 };
            let u1 = blsc_input(&s1, &r, &tube, &g, &m, &n, 50.0).unwrap();
            let u2 = blsc_input(&s2, &r, &tube, &g, &m, &n, 50.0).unwrap();
            assert!(
                (u1 - u2).abs() <= lip * (dth.abs() + dw.abs()) + 1e-12,
                "input jump {} for state step ({dth}, {dw})",
                (u1 - u2).abs()
            );
        }
    }

    #[test]
    fn region_envelope_widening_and_ramp() {
        let spec = DisturbanceSpec {
            regions: vec![DisturbanceRegion { lo: 2.0 * PI, hi: 3.0 * PI, scale: 1.0 }],
            region_bound: 20.0,
            base_bound: 0.0,
            resample_hz: 500.0,
            seed: 0,
        };
        let env = RegionEnvelope::from_disturbance(&spec, 0.15, 0.2);
        assert_abs_diff_eq!(env.value(2.5 * PI), 20.0);
        // Widened flat region covers the tube margin outside the band.
        assert_abs_diff_eq!(env.value(2.0 * PI - 0.1), 20.0);
        // Mid-ramp point.
        let (v, g) = env.value_slope(2.0 * PI - 0.15 - 0.1);
        assert_abs_diff_eq!(v, 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g, 100.0, epsilon = 1e-9);
        // Far outside.
        assert_eq!(env.value(0.0), 0.0);
        assert_abs_diff_eq!(env.max_value(), 20.0);
    }
}
