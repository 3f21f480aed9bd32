//! Direct transcription of the trajectory problems.
//!
//! States are collocated trapezoidally at N+1 knots; the input and the
//! bandwidth hold per interval. Nonlinear pieces (pendulum dynamics,
//! the boundary-layer drive, the `αΦ` bilinear term and the tube
//! gravity term in the input tightening) are replaced by first-order
//! expansions about the current iterate, with trust-region boxes on
//! every variable. Single-variable limits merge with the trust boxes
//! into one pair of bound rows per variable, so the inequality block
//! stays free of duplicated parallel rows.

use super::{FixedTube, MpcError, OcpConfig, PlannedTrajectory, RefKnot};
use crate::ancillary;
use crate::convex::QuadraticProgram;
use nalgebra::{DMatrix, DVector};

/// Planner boundary condition at the handoff point.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialCondition {
    pub theta: f64,
    pub theta_dot: f64,
    pub phi: f64,
    pub omega: f64,
    /// Input and bandwidth active just before the handoff, for
    /// cross-plan rate continuity.
    pub u_prev: Option<f64>,
    pub alpha_prev: Option<f64>,
}

/// Re-exported so scenario code can express hold targets.
pub type TerminalTarget = super::Target;

#[derive(Debug, Clone, PartialEq)]
pub enum TubeMode {
    Dynamic,
    Fixed(FixedTube),
}

/// Tags every inequality row of the subproblem, so tests can pair rows
/// with the nonlinear constraint they linearize.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RowKind {
    SpeedUpper(usize),
    SpeedLower(usize),
    InputUpper { interval: usize, end: usize },
    InputLower { interval: usize, end: usize },
    AlphaUpper(usize),
    AlphaLower(usize),
    OmegaUpper(usize),
    OmegaLower(usize),
    PhiFloor(usize),
    AlphaRateUp(usize),
    AlphaRateDown(usize),
    InputRateUp(usize),
    InputRateDown(usize),
    PrevAlphaRateUp,
    PrevAlphaRateDown,
    PrevInputRateUp,
    PrevInputRateDown,
}

pub struct Subproblem {
    pub qp: QuadraticProgram,
    pub ineq_kinds: Vec<RowKind>,
}

/// Input-condensed subproblem plus the affine expansion map.
pub struct Condensed {
    pub qp: QuadraticProgram,
    pub affine: DMatrix<f64>,
    pub ineq_kinds: Vec<RowKind>,
}

pub struct Transcription {
    pub cfg: OcpConfig,
    pub mode: TubeMode,
    pub ic: InitialCondition,
}

const PHI_FLOOR: f64 = 1e-3;

impl Transcription {
    pub fn new(cfg: OcpConfig, mode: TubeMode, ic: InitialCondition) -> Self {
        Self { cfg, mode, ic }
    }

    pub fn n_intervals(&self) -> usize {
        self.cfg.horizon
    }

    pub fn is_dynamic(&self) -> bool {
        matches!(self.mode, TubeMode::Dynamic)
    }

    pub fn num_vars(&self) -> usize {
        let n = self.cfg.horizon;
        if self.is_dynamic() {
            6 * n + 4
        } else {
            3 * n + 2
        }
    }

    // Variable layout -------------------------------------------------

    pub fn i_theta(&self, k: usize) -> usize {
        k
    }

    pub fn i_w(&self, k: usize) -> usize {
        self.cfg.horizon + 1 + k
    }

    pub fn i_u(&self, k: usize) -> usize {
        2 * (self.cfg.horizon + 1) + k
    }

    pub fn i_alpha(&self, k: usize) -> usize {
        debug_assert!(self.is_dynamic());
        2 * (self.cfg.horizon + 1) + self.cfg.horizon + k
    }

    pub fn i_phi(&self, k: usize) -> usize {
        debug_assert!(self.is_dynamic());
        2 * (self.cfg.horizon + 1) + 2 * self.cfg.horizon + k
    }

    pub fn i_omega(&self, k: usize) -> usize {
        debug_assert!(self.is_dynamic());
        3 * (self.cfg.horizon + 1) + 2 * self.cfg.horizon + k
    }

    /// Per-variable trust-region scale.
    pub fn scales(&self) -> DVector<f64> {
        let n = self.cfg.horizon;
        let mut s = DVector::zeros(self.num_vars());
        for k in 0..=n {
            s[self.i_theta(k)] = 1.0;
            s[self.i_w(k)] = 5.0;
        }
        for k in 0..n {
            s[self.i_u(k)] = 1.0;
        }
        if self.is_dynamic() {
            for k in 0..n {
                s[self.i_alpha(k)] = 50.0;
            }
            for k in 0..=n {
                s[self.i_phi(k)] = 0.5;
                s[self.i_omega(k)] = 0.1;
            }
        }
        s
    }

    // Model shorthands -------------------------------------------------

    fn accel(&self, theta: f64, w: f64, u: f64) -> f64 {
        let nom = &self.cfg.nominal;
        nom.lever / nom.inertia * u
            - self.cfg.model.drag_nominal / nom.inertia * w.abs() * w
            - nom.gravity_accel() * theta.sin()
    }

    fn accel_dtheta(&self, theta: f64) -> f64 {
        -self.cfg.nominal.gravity_accel() * theta.cos()
    }

    fn accel_dw(&self, w: f64) -> f64 {
        -self.cfg.model.drag_nominal / self.cfg.nominal.inertia * 2.0 * w.abs()
    }

    fn delta(&self, theta: f64, w: f64) -> f64 {
        self.cfg.model.delta_drag(w) + self.cfg.model.region.value(theta)
    }

    fn delta_dw(&self, w: f64) -> f64 {
        2.0 * self.cfg.model.drag_error / self.cfg.model.inertia * w
    }

    fn delta_dtheta(&self, theta: f64) -> f64 {
        self.cfg.model.region.value_slope(theta).1
    }

    fn phi_drive(&self, theta: f64, w: f64) -> f64 {
        self.delta(theta, w) + self.cfg.model.d_bound + self.cfg.gains.eta
    }

    /// Smallest bandwidth whose resting boundary layer fits under the
    /// tube ceiling at `theta`: at rest `Φ_ss = drive/α` and
    /// `Ω_ss = Φ_ss/λ ≤ Ω_max` requires `α ≥ drive/(λΩ_max)`.
    pub fn resting_alpha(&self, theta: f64) -> f64 {
        super::resting_alpha(&self.cfg, theta)
    }

    /// Worst-case ancillary input at one knot; fixed mode uses the tube
    /// constants regardless of `z`.
    fn input_use(&self, omega: f64, phi: f64, alpha: f64) -> f64 {
        ancillary::ancillary_input_bound(
            omega,
            phi,
            alpha,
            ancillary::speed_error_bound(phi, omega, self.cfg.gains.lambda),
            self.cfg.speed_max,
            &self.cfg.nominal,
            self.cfg.model.drag_nominal,
            self.cfg.gains.lambda,
        )
    }

    // Initial guesses ---------------------------------------------------

    /// Constant-state guess: hold the initial state with the gravity
    /// balancing input, bandwidth at its floor, and the tube filters
    /// integrated forward exactly.
    pub fn hover_guess(&self) -> DVector<f64> {
        let n = self.cfg.horizon;
        let nom = &self.cfg.nominal;
        let mut z = DVector::zeros(self.num_vars());
        let u_hover = (nom.com_distance * nom.mass * nom.gravity * self.ic.theta.sin()
            / nom.lever)
            .clamp(-self.cfg.u_max, self.cfg.u_max);
        for k in 0..=n {
            z[self.i_theta(k)] = self.ic.theta;
            z[self.i_w(k)] = self.ic.theta_dot;
        }
        for k in 0..n {
            z[self.i_u(k)] = u_hover;
        }
        if self.is_dynamic() {
            let h = self.cfg.dt;
            let alpha = self.resting_alpha(self.ic.theta);
            let lambda = self.cfg.gains.lambda;
            let drive = self.phi_drive(self.ic.theta, self.ic.theta_dot);
            let mut phi = self.ic.phi.max(PHI_FLOOR);
            let mut omega = self.ic.omega.max(0.0);
            for k in 0..n {
                z[self.i_alpha(k)] = alpha;
                z[self.i_phi(k)] = phi;
                z[self.i_omega(k)] = omega;
                let phi_next =
                    (phi * (1.0 - 0.5 * h * alpha) + h * drive) / (1.0 + 0.5 * h * alpha);
                let omega_next = (omega * (1.0 - 0.5 * h * lambda) + 0.5 * h * (phi + phi_next))
                    / (1.0 + 0.5 * h * lambda);
                phi = phi_next;
                omega = omega_next;
            }
            z[self.i_phi(n)] = phi;
            z[self.i_omega(n)] = omega;
        }
        self.apply_ic(&mut z);
        z
    }

    /// Warm start: shift the previous plan to the new time grid; the
    /// stretch past the old horizon is rolled out with the nominal
    /// model (holding the final input and bandwidth), which keeps the
    /// guess dynamically consistent instead of freezing the state.
    pub fn guess_from_plan(&self, plan: &PlannedTrajectory, t0: f64) -> DVector<f64> {
        let n = self.cfg.horizon;
        let h = self.cfg.dt;
        let lambda = self.cfg.gains.lambda;
        let mut z = DVector::zeros(self.num_vars());
        let end = plan.end_time();
        let mut rolled: Option<(f64, f64, f64, f64)> = None; // theta, w, phi, omega
        let mut rolled_alpha: Option<f64> = None;
        for k in 0..=n {
            let t = t0 + k as f64 * h;
            let (theta, w, phi, omega) = if t <= end {
                let r = plan.sample(t);
                (r.theta, r.theta_dot, r.tube.phi, r.tube.omega)
            } else {
                let (mut theta, mut w, mut phi, mut omega) = rolled.unwrap_or_else(|| {
                    let r = plan.sample(end);
                    (r.theta, r.theta_dot, r.tube.phi, r.tube.omega)
                });
                let tail = plan.sample(end);
                let u = tail.u;
                // Lift the bandwidth toward its rest-feasible level as
                // the tail rolls toward tighter tube ceilings, within
                // the rate budget.
                let prev_alpha = rolled_alpha.unwrap_or(tail.tube.alpha);
                let alpha = self
                    .resting_alpha(rolled.map_or(tail.theta, |r| r.0))
                    .max(tail.tube.alpha)
                    .min(prev_alpha + self.cfg.gains.alpha_rate_max * h)
                    .clamp(self.cfg.gains.alpha_min, self.cfg.gains.alpha_max);
                rolled_alpha = Some(alpha);
                // One trapezoid-consistent step per knot.
                let k1 = self.accel(theta, w, u);
                let w_mid = w + h * k1;
                let k2 = self.accel(theta + h * w, w_mid, u);
                let w_next = w + 0.5 * h * (k1 + k2);
                theta += 0.5 * h * (w + w_next);
                w = w_next;
                let drive = self.phi_drive(theta, w);
                let phi_next =
                    (phi * (1.0 - 0.5 * h * alpha) + h * drive) / (1.0 + 0.5 * h * alpha);
                omega = (omega * (1.0 - 0.5 * h * lambda) + 0.5 * h * (phi + phi_next))
                    / (1.0 + 0.5 * h * lambda);
                phi = phi_next;
                rolled = Some((theta, w, phi, omega));
                (theta, w, phi, omega)
            };
            z[self.i_theta(k)] = theta;
            z[self.i_w(k)] = w;
            if self.is_dynamic() {
                z[self.i_phi(k)] = phi.max(PHI_FLOOR);
                z[self.i_omega(k)] = omega.max(0.0);
            }
        }
        for k in 0..n {
            let t_mid = t0 + (k as f64 + 0.5) * h;
            let r = plan.sample(t_mid.min(end));
            z[self.i_u(k)] = r.u.clamp(-self.cfg.u_max, self.cfg.u_max);
            if self.is_dynamic() {
                let alpha = if t_mid > end {
                    // Match the lifted-bandwidth rollout at this knot.
                    let th = z[self.i_theta(k)];
                    self.resting_alpha(th).max(r.tube.alpha)
                } else {
                    r.tube.alpha
                };
                z[self.i_alpha(k)] =
                    alpha.clamp(self.cfg.gains.alpha_min, self.cfg.gains.alpha_max);
            }
        }
        self.apply_ic(&mut z);
        z
    }

    fn apply_ic(&self, z: &mut DVector<f64>) {
        z[self.i_theta(0)] = self.ic.theta;
        z[self.i_w(0)] = self.ic.theta_dot;
        if self.is_dynamic() {
            z[self.i_phi(0)] = self.ic.phi.max(PHI_FLOOR);
            z[self.i_omega(0)] = self.ic.omega.max(0.0);
        }
    }

    // Equality block ----------------------------------------------------

    pub fn num_eq_rows(&self) -> usize {
        let n = self.cfg.horizon;
        if self.is_dynamic() {
            4 * n + 4
        } else {
            2 * n + 2
        }
    }

    /// True residual of equality `idx` at `z` (nonlinear where the
    /// constraint is nonlinear).
    pub fn eq_value(&self, idx: usize, z: &DVector<f64>) -> f64 {
        let n = self.cfg.horizon;
        let h = self.cfg.dt;
        if idx < n {
            // Angle collocation.
            let k = idx;
            z[self.i_theta(k + 1)] - z[self.i_theta(k)]
                - 0.5 * h * (z[self.i_w(k)] + z[self.i_w(k + 1)])
        } else if idx < 2 * n {
            // Speed collocation with ZOH input.
            let k = idx - n;
            let u = z[self.i_u(k)];
            let f0 = self.accel(z[self.i_theta(k)], z[self.i_w(k)], u);
            let f1 = self.accel(z[self.i_theta(k + 1)], z[self.i_w(k + 1)], u);
            z[self.i_w(k + 1)] - z[self.i_w(k)] - 0.5 * h * (f0 + f1)
        } else if self.is_dynamic() && idx < 3 * n {
            // Boundary-layer filter.
            let k = idx - 2 * n;
            let a = z[self.i_alpha(k)];
            let g0 = -a * z[self.i_phi(k)] + self.phi_drive(z[self.i_theta(k)], z[self.i_w(k)]);
            let g1 = -a * z[self.i_phi(k + 1)]
                + self.phi_drive(z[self.i_theta(k + 1)], z[self.i_w(k + 1)]);
            z[self.i_phi(k + 1)] - z[self.i_phi(k)] - 0.5 * h * (g0 + g1)
        } else if self.is_dynamic() && idx < 4 * n {
            // Tube-radius filter (linear).
            let k = idx - 3 * n;
            let lambda = self.cfg.gains.lambda;
            let d0 = -lambda * z[self.i_omega(k)] + z[self.i_phi(k)];
            let d1 = -lambda * z[self.i_omega(k + 1)] + z[self.i_phi(k + 1)];
            z[self.i_omega(k + 1)] - z[self.i_omega(k)] - 0.5 * h * (d0 + d1)
        } else {
            // Boundary conditions.
            let base = if self.is_dynamic() { 4 * n } else { 2 * n };
            match idx - base {
                0 => z[self.i_theta(0)] - self.ic.theta,
                1 => z[self.i_w(0)] - self.ic.theta_dot,
                2 => z[self.i_phi(0)] - self.ic.phi.max(PHI_FLOOR),
                3 => z[self.i_omega(0)] - self.ic.omega.max(0.0),
                _ => unreachable!("equality index out of range"),
            }
        }
    }

    // Inequality catalogue (true values) ---------------------------------

    /// Real (non-trust) value of an inequality row in `g(z) − bound ≤ 0`
    /// form. Variable bounds use the physical limits, not the merged
    /// trust boxes.
    pub fn ineq_true_value(&self, kind: RowKind, z: &DVector<f64>) -> f64 {
        let cfg = &self.cfg;
        let lambda = cfg.gains.lambda;
        match kind {
            RowKind::SpeedUpper(k) | RowKind::SpeedLower(k) => {
                let sign = if matches!(kind, RowKind::SpeedUpper(_)) { 1.0 } else { -1.0 };
                match &self.mode {
                    TubeMode::Dynamic => {
                        let (phi, omega) = self.tube_at(z, k);
                        sign * z[self.i_w(k)] + phi + lambda * omega - cfg.speed_max
                    }
                    TubeMode::Fixed(t) => {
                        let b = t.planned_speed_cap.map_or(t.speed_bound, |c| c.min(t.speed_bound));
                        sign * z[self.i_w(k)] - b
                    }
                }
            }
            RowKind::InputUpper { interval, end } | RowKind::InputLower { interval, end } => {
                let sign = if matches!(kind, RowKind::InputUpper { .. }) { 1.0 } else { -1.0 };
                match &self.mode {
                    TubeMode::Dynamic => {
                        let (phi, omega) = self.tube_at(z, end);
                        let alpha = self.alpha_at(z, interval);
                        sign * z[self.i_u(interval)] + self.input_use(omega, phi, alpha) - cfg.u_max
                    }
                    TubeMode::Fixed(t) => sign * z[self.i_u(interval)] - t.input_bound,
                }
            }
            RowKind::AlphaUpper(k) => z[self.i_alpha(k)] - cfg.gains.alpha_max,
            RowKind::AlphaLower(k) => cfg.gains.alpha_min - z[self.i_alpha(k)],
            RowKind::OmegaUpper(k) => {
                z[self.i_omega(k)] - cfg.omega_max.value(z[self.i_theta(k)])
            }
            RowKind::OmegaLower(k) => -z[self.i_omega(k)],
            RowKind::PhiFloor(k) => PHI_FLOOR - z[self.i_phi(k)],
            RowKind::AlphaRateUp(k) => {
                z[self.i_alpha(k + 1)] - z[self.i_alpha(k)] - cfg.gains.alpha_rate_max * cfg.dt
            }
            RowKind::AlphaRateDown(k) => {
                z[self.i_alpha(k)] - z[self.i_alpha(k + 1)] - cfg.gains.alpha_rate_max * cfg.dt
            }
            RowKind::InputRateUp(k) => {
                z[self.i_u(k + 1)] - z[self.i_u(k)] - cfg.u_rate_max * cfg.dt
            }
            RowKind::InputRateDown(k) => {
                z[self.i_u(k)] - z[self.i_u(k + 1)] - cfg.u_rate_max * cfg.dt
            }
            RowKind::PrevAlphaRateUp => {
                z[self.i_alpha(0)] - self.ic.alpha_prev.unwrap() - cfg.gains.alpha_rate_max * cfg.dt
            }
            RowKind::PrevAlphaRateDown => {
                self.ic.alpha_prev.unwrap() - z[self.i_alpha(0)] - cfg.gains.alpha_rate_max * cfg.dt
            }
            RowKind::PrevInputRateUp => {
                z[self.i_u(0)] - self.ic.u_prev.unwrap() - cfg.u_rate_max * cfg.dt
            }
            RowKind::PrevInputRateDown => {
                self.ic.u_prev.unwrap() - z[self.i_u(0)] - cfg.u_rate_max * cfg.dt
            }
        }
    }

    fn tube_at(&self, z: &DVector<f64>, k: usize) -> (f64, f64) {
        match &self.mode {
            TubeMode::Dynamic => (z[self.i_phi(k)], z[self.i_omega(k)]),
            TubeMode::Fixed(t) => (t.phi, t.omega),
        }
    }

    fn alpha_at(&self, z: &DVector<f64>, interval: usize) -> f64 {
        match &self.mode {
            TubeMode::Dynamic => z[self.i_alpha(interval)],
            TubeMode::Fixed(t) => t.alpha,
        }
    }

    /// Worst true constraint violation at `z`: equality residuals plus
    /// positive parts of every physical inequality; the tube ceiling
    /// uses the live angles in `z`.
    pub fn violation(&self, z: &DVector<f64>) -> f64 {
        let mut worst = 0.0_f64;
        for idx in 0..self.num_eq_rows() {
            worst = worst.max(self.eq_value(idx, z).abs());
        }
        for kind in self.physical_ineq_kinds() {
            worst = worst.max(self.ineq_true_value(kind, z));
        }
        worst
    }

    /// Argmax violation component with a description, for diagnostics.
    pub fn violation_report(&self, z: &DVector<f64>) -> (String, f64) {
        let mut worst = ("none".to_string(), 0.0_f64);
        for idx in 0..self.num_eq_rows() {
            let v = self.eq_value(idx, z).abs();
            if v > worst.1 {
                worst = (format!("eq row {idx}"), v);
            }
        }
        for kind in self.physical_ineq_kinds() {
            let v = self.ineq_true_value(kind, z);
            if v > worst.1 {
                worst = (format!("{kind:?}"), v);
            }
        }
        worst
    }

    /// Catalogue of every physical inequality, in the same order the
    /// subproblem rows are emitted.
    pub fn physical_ineq_kinds(&self) -> Vec<RowKind> {
        let n = self.cfg.horizon;
        let mut kinds = Vec::new();
        for k in 0..=n {
            kinds.push(RowKind::SpeedUpper(k));
            kinds.push(RowKind::SpeedLower(k));
        }
        if self.is_dynamic() {
            for k in 0..n {
                for end in [k, k + 1] {
                    kinds.push(RowKind::InputUpper { interval: k, end });
                    kinds.push(RowKind::InputLower { interval: k, end });
                }
            }
            for k in 0..n {
                kinds.push(RowKind::AlphaUpper(k));
                kinds.push(RowKind::AlphaLower(k));
            }
            for k in 0..=n {
                kinds.push(RowKind::OmegaUpper(k));
                kinds.push(RowKind::OmegaLower(k));
                kinds.push(RowKind::PhiFloor(k));
            }
            for k in 0..n - 1 {
                kinds.push(RowKind::AlphaRateUp(k));
                kinds.push(RowKind::AlphaRateDown(k));
            }
            if self.ic.alpha_prev.is_some() {
                kinds.push(RowKind::PrevAlphaRateUp);
                kinds.push(RowKind::PrevAlphaRateDown);
            }
        } else {
            for k in 0..n {
                kinds.push(RowKind::InputUpper { interval: k, end: k });
                kinds.push(RowKind::InputLower { interval: k, end: k });
            }
        }
        for k in 0..n - 1 {
            kinds.push(RowKind::InputRateUp(k));
            kinds.push(RowKind::InputRateDown(k));
        }
        if self.ic.u_prev.is_some() {
            kinds.push(RowKind::PrevInputRateUp);
            kinds.push(RowKind::PrevInputRateDown);
        }
        kinds
    }

    // Subproblem assembly -------------------------------------------------

    /// Linearize everything about `z_lin` under a trust radius (in
    /// per-variable scale units) and assemble the QP.
    pub fn build_subproblem(&self, z_lin: &DVector<f64>, trust: f64) -> Subproblem {
        let cfg = &self.cfg;
        let n = cfg.horizon;
        let nv = self.num_vars();
        let h = cfg.dt;
        let lambda = cfg.gains.lambda;
        let nom = &cfg.nominal;
        let fpa = nom.force_per_accel();
        let ga = nom.gravity_accel();
        let c2v = cfg.model.drag_nominal / nom.inertia * 2.0 * cfg.speed_max;

        // Cost.
        let mut hess = DMatrix::<f64>::zeros(nv, nv);
        let mut lin = DVector::<f64>::zeros(nv);
        let (tf, wf) = (cfg.target.theta, cfg.target.theta_dot);
        for k in 0..=n {
            let tw = h * if k == 0 || k == n { 0.5 } else { 1.0 };
            let q = if k == n {
                [
                    tw * cfg.q[0] + cfg.q_f[0],
                    tw * cfg.q[1] + cfg.q_f[1],
                    tw * cfg.q[2] + cfg.q_f[2],
                    tw * cfg.q[3] + cfg.q_f[3],
                ]
            } else {
                [tw * cfg.q[0], tw * cfg.q[1], tw * cfg.q[2], tw * cfg.q[3]]
            };
            let (it, iw) = (self.i_theta(k), self.i_w(k));
            hess[(it, it)] += 2.0 * q[0];
            hess[(it, iw)] += q[1] + q[2];
            hess[(iw, it)] += q[1] + q[2];
            hess[(iw, iw)] += 2.0 * q[3];
            lin[it] += -2.0 * (q[0] * tf + q[1] * wf);
            lin[iw] += -2.0 * (q[2] * tf + q[3] * wf);
        }
        for k in 0..n {
            let iu = self.i_u(k);
            hess[(iu, iu)] += 2.0 * h * cfg.r;
            lin[iu] += -2.0 * h * cfg.r * cfg.target.u;
            if self.is_dynamic() {
                let ia = self.i_alpha(k);
                hess[(ia, ia)] += 2.0 * h * cfg.m_alpha;
                lin[ia] += -2.0 * h * cfg.m_alpha * cfg.gains.alpha_min;
            }
        }
        // Scaled proximal term: the soft trust region. Declared as part
        // of the subproblem so the solved QP and its certificate agree.
        let scales = self.scales();
        let prox = 4.0 / trust.max(1e-9);
        for i in 0..nv {
            let mu = prox / (scales[i] * scales[i]);
            hess[(i, i)] += cfg.scp.regularization + mu;
            lin[i] -= mu * z_lin[i];
        }

        // Equalities: gradient rows of the true residuals, with
        // rhs = J z̄ − F(z̄) so the linearized residual vanishes at the
        // solution of the linear model.
        let ne = self.num_eq_rows();
        let mut aeq = DMatrix::<f64>::zeros(ne, nv);
        let mut beq = DVector::<f64>::zeros(ne);
        for idx in 0..n {
            // Angle collocation: exact linear rows.
            let k = idx;
            aeq[(idx, self.i_theta(k + 1))] = 1.0;
            aeq[(idx, self.i_theta(k))] = -1.0;
            aeq[(idx, self.i_w(k))] = -0.5 * h;
            aeq[(idx, self.i_w(k + 1))] = -0.5 * h;
        }
        for k in 0..n {
            let idx = n + k;
            let (t0, w0) = (z_lin[self.i_theta(k)], z_lin[self.i_w(k)]);
            let (t1, w1) = (z_lin[self.i_theta(k + 1)], z_lin[self.i_w(k + 1)]);
            aeq[(idx, self.i_w(k + 1))] = 1.0 - 0.5 * h * self.accel_dw(w1);
            aeq[(idx, self.i_w(k))] = -1.0 - 0.5 * h * self.accel_dw(w0);
            aeq[(idx, self.i_theta(k))] = -0.5 * h * self.accel_dtheta(t0);
            aeq[(idx, self.i_theta(k + 1))] = -0.5 * h * self.accel_dtheta(t1);
            aeq[(idx, self.i_u(k))] = -h * (nom.lever / nom.inertia);
            let row_dot = aeq.row(idx).transpose().dot(z_lin);
            beq[idx] = row_dot - self.eq_value(idx, z_lin);
        }
        if self.is_dynamic() {
            for k in 0..n {
                let idx = 2 * n + k;
                let a = z_lin[self.i_alpha(k)];
                let (p0, p1) = (z_lin[self.i_phi(k)], z_lin[self.i_phi(k + 1)]);
                aeq[(idx, self.i_phi(k + 1))] = 1.0 + 0.5 * h * a;
                aeq[(idx, self.i_phi(k))] = -1.0 + 0.5 * h * a;
                aeq[(idx, self.i_alpha(k))] = 0.5 * h * (p0 + p1);
                aeq[(idx, self.i_w(k))] = -0.5 * h * self.delta_dw(z_lin[self.i_w(k)]);
                aeq[(idx, self.i_w(k + 1))] = -0.5 * h * self.delta_dw(z_lin[self.i_w(k + 1)]);
                aeq[(idx, self.i_theta(k))] = -0.5 * h * self.delta_dtheta(z_lin[self.i_theta(k)]);
                aeq[(idx, self.i_theta(k + 1))] =
                    -0.5 * h * self.delta_dtheta(z_lin[self.i_theta(k + 1)]);
                let row_dot = aeq.row(idx).transpose().dot(z_lin);
                beq[idx] = row_dot - self.eq_value(idx, z_lin);
            }
            for k in 0..n {
                let idx = 3 * n + k;
                aeq[(idx, self.i_omega(k + 1))] = 1.0 + 0.5 * h * lambda;
                aeq[(idx, self.i_omega(k))] = -1.0 + 0.5 * h * lambda;
                aeq[(idx, self.i_phi(k))] = -0.5 * h;
                aeq[(idx, self.i_phi(k + 1))] = -0.5 * h;
            }
        }
        // Boundary rows.
        let base = if self.is_dynamic() { 4 * n } else { 2 * n };
        aeq[(base, self.i_theta(0))] = 1.0;
        beq[base] = self.ic.theta;
        aeq[(base + 1, self.i_w(0))] = 1.0;
        beq[base + 1] = self.ic.theta_dot;
        if self.is_dynamic() {
            aeq[(base + 2, self.i_phi(0))] = 1.0;
            beq[base + 2] = self.ic.phi.max(PHI_FLOOR);
            aeq[(base + 3, self.i_omega(0))] = 1.0;
            beq[base + 3] = self.ic.omega.max(0.0);
        }

        // Inequalities, in catalogue order. Single-variable limits are
        // plain rows; the tube ceiling is evaluated at the
        // linearization angles and refreshed every pass.
        let mut rows: Vec<(Vec<(usize, f64)>, f64, RowKind)> = Vec::new();
        for k in 0..=n {
            match &self.mode {
                TubeMode::Dynamic => {
                    for (sign, kind) in
                        [(1.0, RowKind::SpeedUpper(k)), (-1.0, RowKind::SpeedLower(k))]
                    {
                        rows.push((
                            vec![
                                (self.i_w(k), sign),
                                (self.i_phi(k), 1.0),
                                (self.i_omega(k), lambda),
                            ],
                            cfg.speed_max,
                            kind,
                        ));
                    }
                }
                TubeMode::Fixed(t) => {
                    let b = t.planned_speed_cap.map_or(t.speed_bound, |c| c.min(t.speed_bound));
                    rows.push((vec![(self.i_w(k), 1.0)], b, RowKind::SpeedUpper(k)));
                    rows.push((vec![(self.i_w(k), -1.0)], b, RowKind::SpeedLower(k)));
                }
            }
        }
        match &self.mode {
            TubeMode::Dynamic => {
                for k in 0..n {
                    let abar = z_lin[self.i_alpha(k)];
                    for end in [k, k + 1] {
                        let om_b = z_lin[self.i_omega(end)];
                        let ph_b = z_lin[self.i_phi(end)];
                        let c_omega = fpa * (ga * (om_b / 2.0).cos() + (c2v + lambda) * lambda);
                        let c_phi = fpa * (c2v + lambda + abar);
                        let c_alpha = fpa * ph_b;
                        let const_part = fpa
                            * (ga * (2.0 * (om_b / 2.0).sin() - (om_b / 2.0).cos() * om_b)
                                - abar * ph_b);
                        for (sign, kind) in [
                            (1.0, RowKind::InputUpper { interval: k, end }),
                            (-1.0, RowKind::InputLower { interval: k, end }),
                        ] {
                            rows.push((
                                vec![
                                    (self.i_u(k), sign),
                                    (self.i_omega(end), c_omega),
                                    (self.i_phi(end), c_phi),
                                    (self.i_alpha(k), c_alpha),
                                ],
                                cfg.u_max - const_part,
                                kind,
                            ));
                        }
                    }
                }
                for k in 0..n {
                    rows.push((
                        vec![(self.i_alpha(k), 1.0)],
                        cfg.gains.alpha_max,
                        RowKind::AlphaUpper(k),
                    ));
                    rows.push((
                        vec![(self.i_alpha(k), -1.0)],
                        -cfg.gains.alpha_min,
                        RowKind::AlphaLower(k),
                    ));
                }
                for k in 0..=n {
                    let th_bar = z_lin[self.i_theta(k)];
                    let (ceiling, slope) = cfg.omega_max.value_slope(th_bar);
                    rows.push((
                        vec![(self.i_omega(k), 1.0), (self.i_theta(k), -slope)],
                        ceiling - slope * th_bar,
                        RowKind::OmegaUpper(k),
                    ));
                    rows.push((vec![(self.i_omega(k), -1.0)], 0.0, RowKind::OmegaLower(k)));
                    rows.push((vec![(self.i_phi(k), -1.0)], -PHI_FLOOR, RowKind::PhiFloor(k)));
                }
                let da = cfg.gains.alpha_rate_max * h;
                for k in 0..n - 1 {
                    rows.push((
                        vec![(self.i_alpha(k + 1), 1.0), (self.i_alpha(k), -1.0)],
                        da,
                        RowKind::AlphaRateUp(k),
                    ));
                    rows.push((
                        vec![(self.i_alpha(k), 1.0), (self.i_alpha(k + 1), -1.0)],
                        da,
                        RowKind::AlphaRateDown(k),
                    ));
                }
                if let Some(ap) = self.ic.alpha_prev {
                    rows.push((vec![(self.i_alpha(0), 1.0)], ap + da, RowKind::PrevAlphaRateUp));
                    rows.push((
                        vec![(self.i_alpha(0), -1.0)],
                        da - ap,
                        RowKind::PrevAlphaRateDown,
                    ));
                }
            }
            TubeMode::Fixed(t) => {
                for k in 0..n {
                    rows.push((
                        vec![(self.i_u(k), 1.0)],
                        t.input_bound,
                        RowKind::InputUpper { interval: k, end: k },
                    ));
                    rows.push((
                        vec![(self.i_u(k), -1.0)],
                        t.input_bound,
                        RowKind::InputLower { interval: k, end: k },
                    ));
                }
            }
        }
        let du = cfg.u_rate_max * h;
        for k in 0..n - 1 {
            rows.push((
                vec![(self.i_u(k + 1), 1.0), (self.i_u(k), -1.0)],
                du,
                RowKind::InputRateUp(k),
            ));
            rows.push((
                vec![(self.i_u(k), 1.0), (self.i_u(k + 1), -1.0)],
                du,
                RowKind::InputRateDown(k),
            ));
        }
        if let Some(up) = self.ic.u_prev {
            rows.push((vec![(self.i_u(0), 1.0)], up + du, RowKind::PrevInputRateUp));
            rows.push((vec![(self.i_u(0), -1.0)], du - up, RowKind::PrevInputRateDown));
        }

        let mi = rows.len();
        let mut gmat = DMatrix::<f64>::zeros(mi, nv);
        let mut hvec = DVector::<f64>::zeros(mi);
        let mut kinds = Vec::with_capacity(mi);
        for (r, (coeffs, rhs, kind)) in rows.into_iter().enumerate() {
            for (col, val) in coeffs {
                gmat[(r, col)] = val;
            }
            hvec[r] = rhs;
            kinds.push(kind);
        }

        Subproblem {
            qp: QuadraticProgram {
                hessian: hess,
                linear: lin,
                eq_mat: aeq,
                eq_rhs: beq,
                ineq_mat: gmat,
                ineq_rhs: hvec,
            },
            ineq_kinds: kinds,
        }
    }

    /// Scaled infinity norm of a step.
    pub fn step_norm(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        let scales = self.scales();
        let mut worst = 0.0_f64;
        for i in 0..a.len() {
            worst = worst.max((a[i] - b[i]).abs() / scales[i]);
        }
        worst
    }

    /// True objective of the transcribed problem at `z` (trapezoidal
    /// stage cost plus terminal cost), without solver regularization.
    pub fn cost(&self, z: &DVector<f64>) -> f64 {
        let cfg = &self.cfg;
        let n = cfg.horizon;
        let (tf, wf) = (cfg.target.theta, cfg.target.theta_dot);
        let mut total = 0.0;
        for k in 0..=n {
            let tw = cfg.dt * if k == 0 || k == n { 0.5 } else { 1.0 };
            let dth = z[self.i_theta(k)] - tf;
            let dw = z[self.i_w(k)] - wf;
            let stage = cfg.q[0] * dth * dth
                + (cfg.q[1] + cfg.q[2]) * dth * dw
                + cfg.q[3] * dw * dw;
            total += tw * stage;
            if k == n {
                total += cfg.q_f[0] * dth * dth
                    + (cfg.q_f[1] + cfg.q_f[2]) * dth * dw
                    + cfg.q_f[3] * dw * dw;
            }
        }
        for k in 0..n {
            let du = z[self.i_u(k)] - cfg.target.u;
            total += cfg.dt * cfg.r * du * du;
            if self.is_dynamic() {
                let da = z[self.i_alpha(k)] - cfg.gains.alpha_min;
                total += cfg.dt * cfg.m_alpha * da * da;
            }
        }
        total
    }

    fn state_indices(&self, k: usize) -> Vec<usize> {
        if self.is_dynamic() {
            vec![self.i_theta(k), self.i_w(k), self.i_phi(k), self.i_omega(k)]
        } else {
            vec![self.i_theta(k), self.i_w(k)]
        }
    }

    fn input_indices(&self, k: usize) -> Vec<usize> {
        if self.is_dynamic() {
            vec![self.i_u(k), self.i_alpha(k)]
        } else {
            vec![self.i_u(k)]
        }
    }

    fn interval_eq_rows(&self, k: usize) -> Vec<usize> {
        let n = self.cfg.horizon;
        if self.is_dynamic() {
            vec![k, n + k, 2 * n + k, 3 * n + k]
        } else {
            vec![k, n + k]
        }
    }

    /// Condense the subproblem onto the input variables by forward
    /// elimination of the (block-triangular) linearized dynamics. The
    /// returned QP has no equality block; `affine` maps the reduced
    /// vector `y` back to the stacked one via `z = affine·[y; 1]`.
    pub fn build_condensed(&self, z_lin: &DVector<f64>, trust: f64) -> Condensed {
        let sub = self.build_subproblem(z_lin, trust);
        let n = self.cfg.horizon;
        let nv = self.num_vars();
        let nx = if self.is_dynamic() { 4 } else { 2 };
        let n_in: usize = (0..n).map(|k| self.input_indices(k).len()).sum();

        // Affine representation of every stacked variable in terms of
        // the inputs: inputs are unit rows, states come from rolling
        // the linearized dynamics forward from the boundary rows.
        let mut affine = DMatrix::<f64>::zeros(nv, n_in + 1);
        let mut in_col = vec![0usize; 0];
        {
            let mut next = 0usize;
            for k in 0..n {
                for &iv in &self.input_indices(k) {
                    affine[(iv, next)] = 1.0;
                    in_col.push(iv);
                    next += 1;
                }
            }
        }
        // Initial state from the boundary equality rows (identity rows).
        let ic_base = if self.is_dynamic() { 4 * n } else { 2 * n };
        {
            let sx = self.state_indices(0);
            for (r, &iv) in sx.iter().enumerate() {
                debug_assert!((sub.qp.eq_mat[(ic_base + r, iv)] - 1.0).abs() < 1e-12);
                affine[(iv, n_in)] = sub.qp.eq_rhs[ic_base + r];
            }
        }
        // Forward elimination interval by interval.
        let mut a_next = DMatrix::<f64>::zeros(nx, nx);
        let mut rhs_block = DMatrix::<f64>::zeros(nx, n_in + 1);
        for k in 0..n {
            let rows = self.interval_eq_rows(k);
            let cur = self.state_indices(k);
            let nxt = self.state_indices(k + 1);
            let ins = self.input_indices(k);
            for (r, &row) in rows.iter().enumerate() {
                for (c, &iv) in nxt.iter().enumerate() {
                    a_next[(r, c)] = sub.qp.eq_mat[(row, iv)];
                }
                // rhs − A_cur·x_k − B·u_k in affine form.
                for col in 0..=n_in {
                    let mut acc = if col == n_in { sub.qp.eq_rhs[row] } else { 0.0 };
                    for &iv in &cur {
                        let coeff = sub.qp.eq_mat[(row, iv)];
                        if coeff != 0.0 {
                            acc -= coeff * affine[(iv, col)];
                        }
                    }
                    for &iv in &ins {
                        let coeff = sub.qp.eq_mat[(row, iv)];
                        if coeff != 0.0 {
                            acc -= coeff * affine[(iv, col)];
                        }
                    }
                    rhs_block[(r, col)] = acc;
                }
            }
            let lu = a_next.clone().lu();
            let solved = lu.solve(&rhs_block).expect("dynamics block must be invertible");
            for (r, &iv) in nxt.iter().enumerate() {
                for col in 0..=n_in {
                    affine[(iv, col)] = solved[(r, col)];
                }
            }
        }

        // Pull the cost and the inequalities through the affine map,
        // walking only nonzeros; the transposed copy keeps the affine
        // rows contiguous.
        let aff_t = affine.transpose();
        let mut h_ext = DMatrix::<f64>::zeros(n_in + 1, n_in + 1);
        for j in 0..nv {
            for i in 0..nv {
                let v = sub.qp.hessian[(i, j)];
                if v != 0.0 {
                    let ci = aff_t.column(i);
                    let cj = aff_t.column(j);
                    for b in 0..=n_in {
                        let vb = v * cj[b];
                        if vb != 0.0 {
                            for a in 0..=n_in {
                                h_ext[(a, b)] += vb * ci[a];
                            }
                        }
                    }
                }
            }
        }
        let mut c_red = DVector::<f64>::zeros(n_in);
        for i in 0..nv {
            let v = sub.qp.linear[i];
            if v != 0.0 {
                let ci = aff_t.column(i);
                for a in 0..n_in {
                    c_red[a] += v * ci[a];
                }
            }
        }
        let mut h_red = DMatrix::<f64>::zeros(n_in, n_in);
        for b in 0..n_in {
            for a in 0..n_in {
                h_red[(a, b)] = h_ext[(a, b)];
            }
            // Cross terms between y and the constant column shift the
            // linear part.
            c_red[b] += 0.5 * (h_ext[(b, n_in)] + h_ext[(n_in, b)]);
        }

        let m = sub.qp.ineq_mat.nrows();
        let mut g_red_t = DMatrix::<f64>::zeros(n_in, m);
        let mut rhs_red = DVector::<f64>::zeros(m);
        for r in 0..m {
            let mut constant = 0.0;
            for i in 0..nv {
                let v = sub.qp.ineq_mat[(r, i)];
                if v != 0.0 {
                    let ci = aff_t.column(i);
                    let mut col = g_red_t.column_mut(r);
                    for a in 0..n_in {
                        col[a] += v * ci[a];
                    }
                    constant += v * ci[n_in];
                }
            }
            rhs_red[r] = sub.qp.ineq_rhs[r] - constant;
        }
        let g_red = g_red_t.transpose();

        Condensed {
            qp: QuadraticProgram {
                hessian: h_red,
                linear: c_red,
                eq_mat: DMatrix::zeros(0, n_in),
                eq_rhs: DVector::zeros(0),
                ineq_mat: g_red,
                ineq_rhs: rhs_red,
            },
            affine,
            ineq_kinds: sub.ineq_kinds,
        }
    }

    /// Expand a reduced solution back to the stacked variables.
    pub fn expand(&self, condensed: &Condensed, y: &DVector<f64>) -> DVector<f64> {
        let n_in = y.len();
        let mut ext = DVector::zeros(n_in + 1);
        ext.rows_mut(0, n_in).copy_from(y);
        ext[n_in] = 1.0;
        &condensed.affine * ext
    }

    /// Convert a solution vector into a plan starting at `t0`.
    pub fn unpack(&self, z: &DVector<f64>, t0: f64) -> Result<Vec<RefKnot>, MpcError> {
        let n = self.cfg.horizon;
        let lambda = self.cfg.gains.lambda;
        let mut knots = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let interval = k.min(n - 1);
            let u = z[self.i_u(interval)];
            let (phi, omega) = self.tube_at(z, k);
            let alpha = self.alpha_at(z, interval);
            let theta = z[self.i_theta(k)];
            let w = z[self.i_w(k)];
            let speed_err = ancillary::speed_error_bound(phi, omega, lambda);
            knots.push(RefKnot {
                theta,
                theta_dot: w,
                theta_ddot: self.accel(theta, w, u),
                u,
                alpha,
                phi,
                omega,
                speed_bound: self.cfg.speed_max - speed_err,
                input_bound: self.cfg.u_max - self.input_use(omega, phi, alpha),
            });
        }
        let _ = t0;
        Ok(knots)
    }
}
