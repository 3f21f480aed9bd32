//! Trajectory optimizers.
//!
//! Two planners share one transcription: the dynamic-tube planner
//! co-optimizes `(θ, θ̇, u, α, Φ, Ω)` with the tube filters as
//! constraints, while the fixed-tube planner freezes the tube at the
//! constants implied by the worst anticipated uncertainty and
//! optimizes `(θ, θ̇, u)` under constant tightened bounds. Both are
//! solved by sequential convex programming: linearize about the
//! previous iterate, solve a trust-regioned QP, accept steps that do
//! not increase the true nonlinear constraint violation.

mod scp;
mod transcription;

pub use transcription::{InitialCondition, RowKind, TerminalTarget, Transcription, TubeMode};

use crate::ancillary::{
    self, ControllerGains, NominalParams, ReferencePoint, TubeState, UncertaintyModel,
};
use crate::convex::ConvexError;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MpcError {
    #[error(
        "tube too tight for bandwidth limit: fixed tube needs alpha = {alpha_required:.3} 1/s \
         but alpha_max = {alpha_max:.3} 1/s; the anticipated uncertainty must be reduced"
    )]
    TubeTooTight { alpha_required: f64, alpha_max: f64 },
    #[error("subproblem infeasible at maximum trust region")]
    Infeasible,
    #[error("no convergence after {iterations} iterations (violation {violation:.2e})")]
    NoConvergence { iterations: usize, violation: f64 },
    #[error("constant tightening infeasible: {0}")]
    Tightening(#[from] ancillary::AncillaryError),
    #[error("convex solver failure: {0}")]
    Solver(#[from] ConvexError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Angle-dependent tube-radius ceiling: a default value plus restricted
/// bands, widened outward and ramped linearly so the planner sees a
/// conservative, piecewise-linear profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaMaxMap {
    pub default_max: f64,
    pub bands: Vec<OmegaBand>,
    /// Outward widening of each band, rad.
    pub widen: f64,
    /// Ramp length back to the default, rad.
    pub ramp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmegaBand {
    pub lo: f64,
    pub hi: f64,
    pub value: f64,
}

impl OmegaMaxMap {
    pub fn constant(value: f64) -> Self {
        Self { default_max: value, bands: Vec::new(), widen: 0.0, ramp: 0.1 }
    }

    /// Ceiling at `theta`: the most restrictive band profile.
    pub fn value(&self, theta: f64) -> f64 {
        self.value_slope(theta).0
    }

    /// Ceiling and its slope at `theta`; the slope lets the planner see
    /// that moving along the trajectory relaxes or tightens the bound.
    pub fn value_slope(&self, theta: f64) -> (f64, f64) {
        let mut v = self.default_max;
        let mut g = 0.0;
        for b in &self.bands {
            let lo = b.lo - self.widen;
            let hi = b.hi + self.widen;
            let (profile, slope) = if theta >= lo && theta <= hi {
                (b.value, 0.0)
            } else if theta >= lo - self.ramp && theta < lo {
                let f = (lo - theta) / self.ramp;
                (b.value + f * (self.default_max - b.value), -(self.default_max - b.value) / self.ramp)
            } else if theta > hi && theta <= hi + self.ramp {
                let f = (theta - hi) / self.ramp;
                (b.value + f * (self.default_max - b.value), (self.default_max - b.value) / self.ramp)
            } else {
                continue;
            };
            if profile < v {
                v = profile;
                g = slope;
            }
        }
        (v, g)
    }

    /// Tightest ceiling anywhere; a constant tube must satisfy it.
    pub fn global_min(&self) -> f64 {
        self.bands.iter().map(|b| b.value).fold(self.default_max, f64::min)
    }
}

/// Desired end state of the maneuver and the input that holds it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub theta: f64,
    pub theta_dot: f64,
    pub u: f64,
}

impl Target {
    /// Rest target with the gravity-balancing hold input.
    pub fn rest_at(theta: f64, nominal: &NominalParams) -> Self {
        let u = nominal.com_distance * nominal.mass * nominal.gravity * theta.sin()
            / nominal.lever;
        Self { theta, theta_dot: 0.0, u }
    }
}

/// Sequential-convex-programming knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScpSettings {
    pub max_iterations: usize,
    pub step_tol: f64,
    pub violation_tol: f64,
    /// Steps are accepted while the true violation stays within
    /// `max(previous violation, violation_accept)`; convergence still
    /// requires `violation_tol`.
    pub violation_accept: f64,
    /// Weight of the violation term in the exact-penalty merit.
    pub merit_penalty: f64,
    /// Active-set activation budget per subproblem QP.
    pub qp_activation_cap: usize,
    pub trust_init: f64,
    pub trust_shrink: f64,
    pub trust_grow: f64,
    pub trust_cap: f64,
    pub trust_min: f64,
    /// Declared diagonal regularization on cost-free variables.
    pub regularization: f64,
}

impl Default for ScpSettings {
    fn default() -> Self {
        Self {
            max_iterations: 30,
            step_tol: 1e-4,
            violation_tol: 1e-5,
            violation_accept: 1e-2,
            merit_penalty: 1e3,
            qp_activation_cap: 800,
            trust_init: 0.5,
            trust_shrink: 0.25,
            trust_grow: 4.0,
            trust_cap: 1e6,
            trust_min: 1e-7,
            regularization: 1e-8,
        }
    }
}

/// Everything one trajectory solve needs besides the initial condition.
#[derive(Debug, Clone, PartialEq)]
pub struct OcpConfig {
    /// Number of intervals in the horizon.
    pub horizon: usize,
    /// Knot spacing, s.
    pub dt: f64,
    /// Stage state weight, row-major 2x2.
    pub q: [f64; 4],
    /// Terminal state weight, row-major 2x2.
    pub q_f: [f64; 4],
    /// Input weight.
    pub r: f64,
    /// Bandwidth penalty weight.
    pub m_alpha: f64,
    pub u_max: f64,
    pub u_rate_max: f64,
    pub speed_max: f64,
    pub omega_max: OmegaMaxMap,
    pub gains: ControllerGains,
    pub nominal: NominalParams,
    pub model: UncertaintyModel,
    pub target: Target,
    pub scp: ScpSettings,
}

impl OcpConfig {
    pub fn validate(&self) -> Result<(), MpcError> {
        if self.horizon < 2 {
            return Err(MpcError::Config("horizon must be at least 2".into()));
        }
        if self.dt <= 0.0 {
            return Err(MpcError::Config("dt must be positive".into()));
        }
        if self.r < 0.0 || self.m_alpha < 0.0 {
            return Err(MpcError::Config("R and M must be nonnegative".into()));
        }
        for w in [self.q, self.q_f] {
            if w[0] < 0.0 || w[3] < 0.0 || (w[1] - w[2]).abs() > 1e-12 {
                return Err(MpcError::Config("state weights must be symmetric PSD".into()));
            }
            if w[0] * w[3] - w[1] * w[2] < -1e-12 {
                return Err(MpcError::Config("state weight determinant negative".into()));
            }
        }
        self.gains.validate().map_err(MpcError::Config)?;
        Ok(())
    }
}

/// Constant tube used by the fixed-tube planner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedTube {
    pub omega: f64,
    pub phi: f64,
    pub alpha: f64,
    /// `θ̇_max − (Φ + λΩ)`.
    pub speed_bound: f64,
    /// `u_max − ũ_max`.
    pub input_bound: f64,
    /// Optional extra cap on planned speed when the anticipated
    /// uncertainty had to be reduced to fit the bandwidth limit.
    pub planned_speed_cap: Option<f64>,
}

/// Tube constants for the fixed-tube planner from the anticipated
/// state-dependent uncertainty `Δ̄`: `Φ = λΩ_max`,
/// `α = (Δ̄ + D + η)/(λΩ_max)`. Rejects tubes whose required bandwidth
/// exceeds the actuator-imposed ceiling.
pub fn tmpc_fixed_tube(cfg: &OcpConfig, delta_bar: f64) -> Result<FixedTube, MpcError> {
    let omega = cfg.omega_max.global_min();
    if omega <= 0.0 {
        return Err(MpcError::Config("omega_max must be positive".into()));
    }
    let lambda = cfg.gains.lambda;
    let phi = lambda * omega;
    let alpha = (delta_bar + cfg.model.d_bound + cfg.gains.eta) / phi;
    if alpha > cfg.gains.alpha_max {
        return Err(MpcError::TubeTooTight { alpha_required: alpha, alpha_max: cfg.gains.alpha_max });
    }
    let speed_err = ancillary::speed_error_bound(phi, omega, lambda);
    let speed_bound = ancillary::tighten_speed(phi, omega, lambda, cfg.speed_max)?;
    let input_bound = ancillary::tighten_input(
        omega,
        phi,
        alpha,
        speed_err,
        cfg.speed_max,
        &cfg.nominal,
        cfg.model.drag_nominal,
        lambda,
        cfg.u_max,
    )?;
    Ok(FixedTube { omega, phi, alpha, speed_bound, input_bound, planned_speed_cap: None })
}

/// One knot of a planned trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefKnot {
    pub theta: f64,
    pub theta_dot: f64,
    pub theta_ddot: f64,
    /// Interval input (held over `[k, k+1)`; the last knot repeats it).
    pub u: f64,
    pub alpha: f64,
    pub phi: f64,
    pub omega: f64,
    /// Tightened per-knot limits, for logging and tests.
    pub speed_bound: f64,
    pub input_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolveMeta {
    pub scp_iterations: usize,
    pub qp_activations: usize,
    pub trust_radius: f64,
    pub violation: f64,
    /// True violation of each accepted iterate, starting at the guess.
    pub accepted_violations: Vec<f64>,
}

/// Time-indexed plan produced by one trajectory solve.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedTrajectory {
    pub t0: f64,
    pub dt: f64,
    pub knots: Vec<RefKnot>,
    pub meta: SolveMeta,
}

impl PlannedTrajectory {
    pub fn end_time(&self) -> f64 {
        self.t0 + self.dt * (self.knots.len() - 1) as f64
    }

    /// Reference at absolute time `t`: states and tube interpolate
    /// linearly between knots, the input holds per interval, and the
    /// plan holds its last knot beyond the horizon.
    pub fn sample(&self, t: f64) -> ReferencePoint {
        let n = self.knots.len() - 1;
        let tau = ((t - self.t0) / self.dt).clamp(0.0, n as f64);
        let k = (tau.floor() as usize).min(n - 1);
        let f = tau - k as f64;
        let a = &self.knots[k];
        let b = &self.knots[k + 1];
        let lerp = |x: f64, y: f64| x + f * (y - x);
        ReferencePoint {
            theta: lerp(a.theta, b.theta),
            theta_dot: lerp(a.theta_dot, b.theta_dot),
            theta_ddot: lerp(a.theta_ddot, b.theta_ddot),
            u: a.u,
            tube: TubeState {
                phi: lerp(a.phi, b.phi),
                omega: lerp(a.omega, b.omega),
                alpha: lerp(a.alpha, b.alpha),
            },
        }
    }
}

/// Smallest bandwidth whose resting boundary layer fits under the tube
/// ceiling at `theta`.
pub fn resting_alpha(cfg: &OcpConfig, theta: f64) -> f64 {
    let drive = cfg.model.delta_total(theta, 0.0) + cfg.model.d_bound + cfg.gains.eta;
    (drive / (cfg.gains.lambda * cfg.omega_max.value(theta).max(1e-6)))
        .clamp(cfg.gains.alpha_min, cfg.gains.alpha_max)
}

/// Dynamic-tube trajectory solve.
pub fn solve_dtmpc(
    cfg: &OcpConfig,
    ic: &InitialCondition,
    t0: f64,
    warm: Option<&PlannedTrajectory>,
) -> Result<PlannedTrajectory, MpcError> {
    cfg.validate()?;
    let tr = Transcription::new(cfg.clone(), TubeMode::Dynamic, ic.clone());
    scp::solve(&tr, t0, warm)
}

/// Fixed-tube trajectory solve; `α`, `Φ`, `Ω` stay at the tube
/// constants and are excluded from the decision vector.
pub fn solve_tmpc(
    cfg: &OcpConfig,
    tube: &FixedTube,
    ic: &InitialCondition,
    t0: f64,
    warm: Option<&PlannedTrajectory>,
) -> Result<PlannedTrajectory, MpcError> {
    cfg.validate()?;
    let tr = Transcription::new(cfg.clone(), TubeMode::Fixed(*tube), ic.clone());
    scp::solve(&tr, t0, warm)
}
