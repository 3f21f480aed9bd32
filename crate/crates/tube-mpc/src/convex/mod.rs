//! Dense convex QP and LP solvers with independently checkable
//! optimality certificates.
//!
//! Problems are value types; both solvers are reentrant and
//! deterministic, sized for the trajectory-optimization subproblems
//! (a few hundred variables) and the small identification LPs. Every
//! `Optimal` result carries multipliers that must pass the KKT
//! residual checks in this module; callers and tests recompute the
//! residuals rather than trusting solver internals.

mod lp;
mod qp;

pub use lp::solve_lp;
pub use qp::{solve_qp, solve_qp_capped};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Primal/dual tolerance for the KKT certificate.
pub const KKT_TOL: f64 = 1e-7;
/// Iteration cap shared by both solvers.
pub const MAX_ITERATIONS: usize = 200;

#[derive(Debug, Error)]
pub enum ConvexError {
    #[error("dimension mismatch: {0}")]
    Dimensions(String),
    #[error("cost matrix is not symmetric positive semidefinite: {0}")]
    NotPsd(String),
    #[error("equality constraints are rank deficient")]
    RankDeficientEqualities,
}

/// `min ½xᵀHx + cᵀx  s.t.  A x = b,  G x ≤ h`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProgram {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub eq_mat: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
    pub ineq_mat: DMatrix<f64>,
    pub ineq_rhs: DVector<f64>,
}

impl QuadraticProgram {
    pub fn unconstrained(hessian: DMatrix<f64>, linear: DVector<f64>) -> Self {
        let n = linear.len();
        Self {
            hessian,
            linear,
            eq_mat: DMatrix::zeros(0, n),
            eq_rhs: DVector::zeros(0),
            ineq_mat: DMatrix::zeros(0, n),
            ineq_rhs: DVector::zeros(0),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.linear.len()
    }

    /// Checks dimensional consistency, symmetry to 1e-12 (relative to
    /// the largest entry), and positive semidefiniteness via a shifted
    /// Cholesky factorization.
    pub fn validate(&self) -> Result<(), ConvexError> {
        let n = self.num_vars();
        if self.hessian.nrows() != n || self.hessian.ncols() != n {
            return Err(ConvexError::Dimensions(format!(
                "hessian is {}x{}, expected {n}x{n}",
                self.hessian.nrows(),
                self.hessian.ncols()
            )));
        }
        if self.eq_mat.ncols() != n || self.eq_mat.nrows() != self.eq_rhs.len() {
            return Err(ConvexError::Dimensions("equality block".into()));
        }
        if self.ineq_mat.ncols() != n || self.ineq_mat.nrows() != self.ineq_rhs.len() {
            return Err(ConvexError::Dimensions("inequality block".into()));
        }
        let scale = self.hessian.amax().max(1.0);
        for i in 0..n {
            for j in (i + 1)..n {
                if (self.hessian[(i, j)] - self.hessian[(j, i)]).abs() > 1e-12 * scale {
                    return Err(ConvexError::NotPsd(format!(
                        "asymmetry at ({i},{j}): {} vs {}",
                        self.hessian[(i, j)],
                        self.hessian[(j, i)]
                    )));
                }
            }
        }
        // PSD up to a tiny diagonal shift; a strictly indefinite matrix
        // still fails the shifted factorization.
        let shifted = &self.hessian + DMatrix::identity(n, n) * (1e-10 * scale);
        if shifted.cholesky().is_none() {
            return Err(ConvexError::NotPsd("shifted Cholesky failed".into()));
        }
        Ok(())
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * (x.transpose() * &self.hessian * x)[(0, 0)] + self.linear.dot(x)
    }
}

/// `min cᵀx  s.t.  G x ≤ h,  lb ≤ x ≤ ub` (bounds may be infinite).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub cost: DVector<f64>,
    pub ineq_mat: DMatrix<f64>,
    pub ineq_rhs: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl LinearProgram {
    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn validate(&self) -> Result<(), ConvexError> {
        let n = self.num_vars();
        if self.ineq_mat.ncols() != n || self.ineq_mat.nrows() != self.ineq_rhs.len() {
            return Err(ConvexError::Dimensions("inequality block".into()));
        }
        if self.lower.len() != n || self.upper.len() != n {
            return Err(ConvexError::Dimensions("bounds".into()));
        }
        for j in 0..n {
            if self.lower[j] > self.upper[j] {
                return Err(ConvexError::Dimensions(format!("empty bound interval on x{j}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIterations,
}

/// Solver output; multipliers are meaningful only when `status` is
/// `Optimal`.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub x: DVector<f64>,
    pub eq_duals: DVector<f64>,
    pub ineq_duals: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
}

impl SolveResult {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// Component-wise KKT residuals; `worst()` aggregates them.
#[derive(Debug, Clone, Copy, Default)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal_eq: f64,
    pub primal_ineq: f64,
    pub dual_feasibility: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn worst(&self) -> f64 {
        self.stationarity
            .max(self.primal_eq)
            .max(self.primal_ineq)
            .max(self.dual_feasibility)
            .max(self.complementarity)
    }
}

/// Recomputes the QP optimality conditions from scratch.
pub fn qp_kkt_residuals(
    qp: &QuadraticProgram,
    x: &DVector<f64>,
    eq_duals: &DVector<f64>,
    ineq_duals: &DVector<f64>,
) -> KktResiduals {
    let mut grad = &qp.hessian * x + &qp.linear;
    if qp.eq_mat.nrows() > 0 {
        grad += qp.eq_mat.transpose() * eq_duals;
    }
    if qp.ineq_mat.nrows() > 0 {
        grad += qp.ineq_mat.transpose() * ineq_duals;
    }
    let mut res = KktResiduals { stationarity: grad.amax(), ..Default::default() };

    if qp.eq_mat.nrows() > 0 {
        res.primal_eq = (&qp.eq_mat * x - &qp.eq_rhs).amax();
    }
    for i in 0..qp.ineq_mat.nrows() {
        let slack = qp.ineq_mat.row(i).transpose().dot(x) - qp.ineq_rhs[i];
        res.primal_ineq = res.primal_ineq.max(slack);
        res.dual_feasibility = res.dual_feasibility.max(-ineq_duals[i]);
        res.complementarity = res.complementarity.max((ineq_duals[i] * slack).abs());
    }
    res
}

/// Recomputes the LP optimality conditions. Bound multipliers are
/// implied by the stationarity defect `r = c + Gᵀμ`: a variable at its
/// lower bound needs `r ≥ 0`, at its upper bound `r ≤ 0`, and an
/// interior variable needs `r = 0`.
pub fn lp_kkt_residuals(lp: &LinearProgram, x: &DVector<f64>, ineq_duals: &DVector<f64>) -> KktResiduals {
    let n = lp.num_vars();
    let act_tol = 1e-8;
    let mut r = lp.cost.clone();
    if lp.ineq_mat.nrows() > 0 {
        r += lp.ineq_mat.transpose() * ineq_duals;
    }
    let mut res = KktResiduals::default();
    for j in 0..n {
        res.primal_ineq = res.primal_ineq.max(lp.lower[j] - x[j]).max(x[j] - lp.upper[j]);
        let at_lower = x[j] - lp.lower[j] <= act_tol;
        let at_upper = lp.upper[j] - x[j] <= act_tol;
        let defect = match (at_lower, at_upper) {
            (true, true) => 0.0,
            (true, false) => (-r[j]).max(0.0),
            (false, true) => r[j].max(0.0),
            (false, false) => r[j].abs(),
        };
        res.stationarity = res.stationarity.max(defect);
    }
    for i in 0..lp.ineq_mat.nrows() {
        let slack = lp.ineq_mat.row(i).transpose().dot(x) - lp.ineq_rhs[i];
        res.primal_ineq = res.primal_ineq.max(slack);
        res.dual_feasibility = res.dual_feasibility.max(-ineq_duals[i]);
        res.complementarity = res.complementarity.max((ineq_duals[i] * slack).abs());
    }
    res
}
