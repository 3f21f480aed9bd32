//! Set-membership identification.
//!
//! Closed-loop samples are turned into linear two-sided constraints on
//! the parameter vector (I, L, C_d, L_cm): any parameter values
//! consistent with the measured acceleration up to the disturbance
//! bound satisfy `|I·θ̈ − L·u + C_d·|θ̇|θ̇ + L_cm·m·g·sin θ| ≤ D·I`.
//! Each update intersects the published box with the per-parameter
//! extremes of the constrained set (eight small LPs), so widths never
//! grow and the true parameters stay inside as long as the configured
//! bound overestimates the realized disturbance. Bounds are published
//! only after two consecutive updates agree, which rejects outliers at
//! the cost of a one-cycle lag.

use crate::convex::{solve_lp, LinearProgram, SolveStatus};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SmidError {
    #[error("identification batch inconsistent with the disturbance bound (LP infeasible); \
             D is underestimated or the batch contains outliers")]
    InfeasibleBatch,
    #[error("identification LP failed with status {0:?}")]
    SolverFailure(SolveStatus),
}

pub const PARAM_NAMES: [&str; 4] = ["inertia", "lever", "drag", "com_distance"];

/// Interval bounds on (I, L, C_d, L_cm), in that order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    pub lo: [f64; 4],
    pub hi: [f64; 4],
}

impl ParamBox {
    pub fn new(lo: [f64; 4], hi: [f64; 4]) -> Self {
        Self { lo, hi }
    }

    /// Box centered on the measured geometry with a relative margin on
    /// (I, L, L_cm) and an explicit drag interval.
    pub fn around(
        inertia: f64,
        lever: f64,
        com: f64,
        geometry_margin: f64,
        drag_lo: f64,
        drag_hi: f64,
    ) -> Self {
        let m = geometry_margin;
        Self {
            lo: [inertia * (1.0 - m), lever * (1.0 - m), drag_lo, com * (1.0 - m)],
            hi: [inertia * (1.0 + m), lever * (1.0 + m), drag_hi, com * (1.0 + m)],
        }
    }

    pub fn widths(&self) -> [f64; 4] {
        [
            self.hi[0] - self.lo[0],
            self.hi[1] - self.lo[1],
            self.hi[2] - self.lo[2],
            self.hi[3] - self.lo[3],
        ]
    }

    pub fn midpoint(&self) -> [f64; 4] {
        [
            0.5 * (self.lo[0] + self.hi[0]),
            0.5 * (self.lo[1] + self.hi[1]),
            0.5 * (self.lo[2] + self.hi[2]),
            0.5 * (self.lo[3] + self.hi[3]),
        ]
    }

    pub fn contains(&self, p: [f64; 4]) -> bool {
        (0..4).all(|i| p[i] >= self.lo[i] - 1e-12 && p[i] <= self.hi[i] + 1e-12)
    }

    pub fn drag_interval(&self) -> (f64, f64) {
        (self.lo[2], self.hi[2])
    }

    pub fn is_valid(&self) -> bool {
        (0..4).all(|i| self.lo[i] <= self.hi[i] && self.lo[i].is_finite() && self.hi[i].is_finite())
    }

    /// True when every interval of `self` lies inside `other`.
    pub fn subset_of(&self, other: &ParamBox) -> bool {
        (0..4).all(|i| self.lo[i] >= other.lo[i] - 1e-12 && self.hi[i] <= other.hi[i] + 1e-12)
    }
}

/// Time-aligned sample; all channels refer to the same instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub theta: f64,
    pub theta_dot: f64,
    pub theta_ddot: f64,
    pub u: f64,
    pub t: f64,
}

/// Coefficients of the constraint `|φ·ρ| ≤ D·I` in the parameters
/// ρ = (I, L, C_d, L_cm): base = (θ̈, −u, |θ̇|θ̇, m·g·sin θ). The `D·I`
/// term folds into the inertia coefficient of the two one-sided rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressorRow {
    pub base: [f64; 4],
}

/// Builds the regressor for one aligned measurement.
pub fn regressor_row(meas: &Measurement, mass: f64, gravity: f64) -> RegressorRow {
    RegressorRow {
        base: [
            meas.theta_ddot,
            -meas.u,
            meas.theta_dot.abs() * meas.theta_dot,
            mass * gravity * meas.theta.sin(),
        ],
    }
}

impl RegressorRow {
    /// The two one-sided inequalities `±φ·ρ − D·I ≤ 0`.
    pub fn inequality_rows(&self, d_bound: f64) -> [[f64; 4]; 2] {
        let b = self.base;
        [
            [b[0] - d_bound, b[1], b[2], b[3]],
            [-b[0] - d_bound, -b[1], -b[2], -b[3]],
        ]
    }
}

/// Five-point central differentiator over the inner-loop angle stream.
///
/// The acceleration estimate is exact for quartics; the other channels
/// are delayed two samples so everything in the emitted measurement
/// refers to the same instant.
#[derive(Debug, Clone)]
pub struct Differentiator {
    dt: f64,
    buf: VecDeque<(f64, f64, f64, f64)>, // theta, theta_dot, u, t
}

impl Differentiator {
    pub fn new(dt: f64) -> Self {
        Self { dt, buf: VecDeque::with_capacity(5) }
    }

    /// Feeds one sample; once warm (5 samples) emits the measurement
    /// aligned two samples back.
    pub fn push(&mut self, theta: f64, theta_dot: f64, u: f64, t: f64) -> Option<Measurement> {
        if self.buf.len() == 5 {
            self.buf.pop_front();
        }
        self.buf.push_back((theta, theta_dot, u, t));
        if self.buf.len() < 5 {
            return None;
        }
        let th: Vec<f64> = self.buf.iter().map(|s| s.0).collect();
        let accel = (-th[0] + 16.0 * th[1] - 30.0 * th[2] + 16.0 * th[3] - th[4])
            / (12.0 * self.dt * self.dt);
        let center = self.buf[2];
        Some(Measurement {
            theta: center.0,
            theta_dot: center.1,
            theta_ddot: accel,
            u: center.2,
            t: center.3,
        })
    }

    pub fn reset(&mut self) {
        self.buf.clear();
    }
}

/// Per-parameter min/max LPs over the box plus the batch rows; the
/// returned box is the intersection of `prior` with the solved
/// extremes (a sound outer approximation of the exact polytope).
pub fn update_bounds(
    prior: &ParamBox,
    rows: &[RegressorRow],
    d_bound: f64,
) -> Result<ParamBox, SmidError> {
    if rows.is_empty() {
        return Ok(*prior);
    }
    let m = rows.len() * 2;
    let mut g = DMatrix::zeros(m, 4);
    for (k, row) in rows.iter().enumerate() {
        let pair = row.inequality_rows(d_bound);
        for (side, coeffs) in pair.iter().enumerate() {
            for j in 0..4 {
                g[(2 * k + side, j)] = coeffs[j];
            }
        }
    }
    let rhs = DVector::zeros(m);
    let lower = DVector::from_row_slice(&prior.lo);
    let upper = DVector::from_row_slice(&prior.hi);

    let mut out = *prior;
    for p in 0..4 {
        for (dir, is_upper) in [(1.0, false), (-1.0, true)] {
            let mut cost = DVector::zeros(4);
            cost[p] = dir;
            let lp = LinearProgram {
                cost,
                ineq_mat: g.clone(),
                ineq_rhs: rhs.clone(),
                lower: lower.clone(),
                upper: upper.clone(),
            };
            let sol = solve_lp(&lp).map_err(|_| SmidError::InfeasibleBatch)?;
            match sol.status {
                SolveStatus::Optimal => {
                    if is_upper {
                        out.hi[p] = out.hi[p].min(sol.x[p]);
                    } else {
                        out.lo[p] = out.lo[p].max(sol.x[p]);
                    }
                }
                SolveStatus::Infeasible => return Err(SmidError::InfeasibleBatch),
                s => return Err(SmidError::SolverFailure(s)),
            }
        }
    }
    Ok(out)
}

/// Two-consecutive-results gate: a candidate bound becomes published
/// only when the next update independently reproduces a bound at least
/// that tight, so published bounds lag one cycle on a monotone stream.
#[derive(Debug, Clone)]
pub struct BoundValidator {
    published: ParamBox,
    prev_candidate: Option<ParamBox>,
}

impl BoundValidator {
    pub fn new(initial: ParamBox) -> Self {
        Self { published: initial, prev_candidate: None }
    }

    pub fn published(&self) -> &ParamBox {
        &self.published
    }

    /// Feeds one update result; returns the new published box when any
    /// side tightened.
    pub fn offer(&mut self, candidate: ParamBox) -> Option<ParamBox> {
        let mut changed = false;
        if let Some(prev) = self.prev_candidate {
            for p in 0..4 {
                if candidate.hi[p] <= prev.hi[p] && prev.hi[p] < self.published.hi[p] {
                    self.published.hi[p] = prev.hi[p];
                    changed = true;
                }
                if candidate.lo[p] >= prev.lo[p] && prev.lo[p] > self.published.lo[p] {
                    self.published.lo[p] = prev.lo[p];
                    changed = true;
                }
            }
        }
        self.prev_candidate = Some(candidate);
        changed.then_some(self.published)
    }
}

/// Identification settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmidConfig {
    /// Disturbance bound used by identification; must overestimate the
    /// realized |d| (including differentiation error) or containment is
    /// lost.
    pub d_id: f64,
    /// Aligned measurements consumed per update tick.
    pub batch_size: usize,
    /// Rows with |θ̇| below this are dropped (near-zero drag regressor).
    pub excitation_min_speed: f64,
}

impl Default for SmidConfig {
    fn default() -> Self {
        Self { d_id: 20.0, batch_size: 10, excitation_min_speed: 0.5 }
    }
}

/// Online identification pipeline: differentiate, gate, batch, solve,
/// validate.
#[derive(Debug, Clone)]
pub struct SmidEngine {
    diff: Differentiator,
    pending: Vec<Measurement>,
    validator: BoundValidator,
    cfg: SmidConfig,
    mass: f64,
    gravity: f64,
    pub rejected_batches: usize,
    pub updates_run: usize,
}

impl SmidEngine {
    pub fn new(initial: ParamBox, cfg: SmidConfig, dt: f64, mass: f64, gravity: f64) -> Self {
        Self {
            diff: Differentiator::new(dt),
            pending: Vec::new(),
            validator: BoundValidator::new(initial),
            cfg,
            mass,
            gravity,
            rejected_batches: 0,
            updates_run: 0,
        }
    }

    pub fn published(&self) -> &ParamBox {
        self.validator.published()
    }

    /// Inner-loop sample feed.
    pub fn push_sample(&mut self, theta: f64, theta_dot: f64, u: f64, t: f64) {
        if let Some(m) = self.diff.push(theta, theta_dot, u, t) {
            if m.theta_dot.abs() >= self.cfg.excitation_min_speed {
                self.pending.push(m);
            }
        }
    }

    /// Update tick. Returns the newly published box when the validation
    /// gate passes.
    pub fn tick(&mut self) -> Result<Option<ParamBox>, SmidError> {
        if self.pending.is_empty() {
            return Ok(None);
        }
        let take = self.pending.len().min(self.cfg.batch_size);
        let rows: Vec<RegressorRow> = self
            .pending
            .drain(..take)
            .map(|m| regressor_row(&m, self.mass, self.gravity))
            .collect();
        self.pending.clear();
        self.updates_run += 1;
        match update_bounds(self.validator.published(), &rows, self.cfg.d_id) {
            Ok(candidate) => Ok(self.validator.offer(candidate)),
            Err(SmidError::InfeasibleBatch) => {
                self.rejected_batches += 1;
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }
}
