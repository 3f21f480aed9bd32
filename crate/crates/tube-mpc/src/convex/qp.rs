//! Dense quadratic programming.
//!
//! Equalities are eliminated first: a Householder QR of `Aᵀ` yields a
//! particular solution and an orthonormal null-space basis `Z`, and the
//! problem is restated over the reduced coordinates. The reduced
//! strictly convex problem is then solved with the dual active-set
//! method of Goldfarb and Idnani, which starts from the unconstrained
//! minimizer and adds violated constraints one at a time while keeping
//! dual feasibility. Iteration count equals the number of constraint
//! activations, so the cap bounds work independently of the equality
//! block size.

use super::{
    qp_kkt_residuals, ConvexError, QuadraticProgram, SolveResult, SolveStatus, KKT_TOL,
    MAX_ITERATIONS,
};
use nalgebra::{DMatrix, DVector};

/// Solve a convex QP. Infeasibility and iteration exhaustion are
/// reported through `SolveResult::status`, never by panicking.
pub fn solve_qp(qp: &QuadraticProgram) -> Result<SolveResult, ConvexError> {
    solve_qp_capped(qp, MAX_ITERATIONS)
}

/// Like [`solve_qp`] with an explicit activation cap, for callers whose
/// subproblems legitimately cycle through more active-set changes than
/// the default allows (trust-regioned trajectory QPs activate a bound
/// on most variables).
pub fn solve_qp_capped(qp: &QuadraticProgram, max_activations: usize) -> Result<SolveResult, ConvexError> {
    check_shape(qp)?;
    let n = qp.num_vars();
    let p = qp.eq_mat.nrows();

    if p == 0 {
        let gi = goldfarb_idnani(&qp.hessian, &qp.linear, &qp.ineq_mat, &qp.ineq_rhs, max_activations)?;
        return Ok(finish(qp, gi.status, gi.y, DVector::zeros(0), gi.duals, gi.iterations, None));
    }

    let factor = EqFactor::new(qp.eq_mat.transpose())?;
    let x_part = factor.min_norm_solution(&qp.eq_rhs);

    if p >= n {
        // The equalities determine the point completely.
        let feasible = qp
            .ineq_rhs
            .iter()
            .enumerate()
            .all(|(i, &h)| qp.ineq_mat.row(i).transpose().dot(&x_part) <= h + 1e-9);
        let status = if feasible { SolveStatus::Optimal } else { SolveStatus::Infeasible };
        let duals = DVector::zeros(qp.ineq_mat.nrows());
        return Ok(finish(qp, status, x_part, DVector::zeros(p), duals, 0, Some(&factor)));
    }

    let z_basis = factor.null_basis();
    // The cost and constraint matrices of trajectory problems are very
    // sparse; accumulate the reduced blocks from nonzeros instead of
    // paying dense-product cost.
    let hz = sparse_times_dense(&qp.hessian, &z_basis);
    let h_red = z_basis.transpose() * &hz;
    let c_red = z_basis.transpose() * (sparse_times_vec(&qp.hessian, &x_part) + &qp.linear);
    let g_red = sparse_times_dense(&qp.ineq_mat, &z_basis);
    let rhs_red = &qp.ineq_rhs - sparse_times_vec(&qp.ineq_mat, &x_part);

    let gi = goldfarb_idnani(&h_red, &c_red, &g_red, &rhs_red, max_activations)?;
    let x = &x_part + &z_basis * &gi.y;
    Ok(finish(qp, gi.status, x, DVector::zeros(p), gi.duals, gi.iterations, Some(&factor)))
}

/// `A·B` walking only the nonzeros of `A`.
fn sparse_times_dense(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), b.ncols());
    for col in 0..a.ncols() {
        for row in 0..a.nrows() {
            let v = a[(row, col)];
            if v != 0.0 {
                for k in 0..b.ncols() {
                    out[(row, k)] += v * b[(col, k)];
                }
            }
        }
    }
    out
}

/// `A·x` walking only the nonzeros of `A`.
fn sparse_times_vec(a: &DMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(a.nrows());
    for col in 0..a.ncols() {
        let xv = x[col];
        if xv != 0.0 {
            for row in 0..a.nrows() {
                let v = a[(row, col)];
                if v != 0.0 {
                    out[row] += v * xv;
                }
            }
        }
    }
    out
}

fn check_shape(qp: &QuadraticProgram) -> Result<(), ConvexError> {
    let n = qp.num_vars();
    if qp.hessian.nrows() != n || qp.hessian.ncols() != n {
        return Err(ConvexError::Dimensions("hessian".into()));
    }
    if qp.eq_mat.ncols() != n || qp.eq_mat.nrows() != qp.eq_rhs.len() {
        return Err(ConvexError::Dimensions("equality block".into()));
    }
    if qp.ineq_mat.ncols() != n || qp.ineq_mat.nrows() != qp.ineq_rhs.len() {
        return Err(ConvexError::Dimensions("inequality block".into()));
    }
    let scale = qp.hessian.amax().max(1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            if (qp.hessian[(i, j)] - qp.hessian[(j, i)]).abs() > 1e-12 * scale {
                return Err(ConvexError::NotPsd("hessian asymmetric".into()));
            }
        }
    }
    Ok(())
}

/// Assemble the result: recover equality duals from stationarity and
/// certify the KKT conditions; an uncertified point is downgraded.
fn finish(
    qp: &QuadraticProgram,
    status: SolveStatus,
    x: DVector<f64>,
    mut eq_duals: DVector<f64>,
    ineq_duals: DVector<f64>,
    iterations: usize,
    factor: Option<&EqFactor>,
) -> SolveResult {
    let mut status = status;
    let objective = qp.objective(&x);
    if status == SolveStatus::Optimal {
        if let Some(f) = factor {
            let mut rhs = -(&qp.hessian * &x + &qp.linear);
            if qp.ineq_mat.nrows() > 0 {
                rhs -= qp.ineq_mat.transpose() * &ineq_duals;
            }
            eq_duals = f.solve_duals(&rhs);
        }
        let kkt = qp_kkt_residuals(qp, &x, &eq_duals, &ineq_duals);
        if kkt.worst() > KKT_TOL {
            status = SolveStatus::MaxIterations;
        }
    }
    SolveResult { status, x, eq_duals, ineq_duals, objective, iterations }
}

// ---------------------------------------------------------------------
// Householder factorization of Aᵀ for the equality block.
// ---------------------------------------------------------------------

struct EqFactor {
    /// n×p factored matrix: R on and above the diagonal, reflector
    /// tails below (leading component normalized to one).
    qr: DMatrix<f64>,
    taus: Vec<f64>,
    n: usize,
    p: usize,
}

impl EqFactor {
    fn new(mut at: DMatrix<f64>) -> Result<Self, ConvexError> {
        let (n, p) = (at.nrows(), at.ncols());
        debug_assert!(n >= p);
        let scale = at.amax().max(1e-300);
        let mut taus = vec![0.0; p];
        for j in 0..p {
            let norm = {
                let mut acc = 0.0;
                for i in j..n {
                    acc += at[(i, j)] * at[(i, j)];
                }
                acc.sqrt()
            };
            if norm <= 1e-12 * scale {
                return Err(ConvexError::RankDeficientEqualities);
            }
            let alpha = if at[(j, j)] >= 0.0 { -norm } else { norm };
            let v0 = at[(j, j)] - alpha;
            let mut vtv = v0 * v0;
            for i in (j + 1)..n {
                vtv += at[(i, j)] * at[(i, j)];
            }
            taus[j] = 2.0 * v0 * v0 / vtv;
            for i in (j + 1)..n {
                at[(i, j)] /= v0;
            }
            at[(j, j)] = alpha;
            // Apply the reflector to the trailing columns.
            for col in (j + 1)..p {
                let mut dot = at[(j, col)];
                for i in (j + 1)..n {
                    dot += at[(i, j)] * at[(i, col)];
                }
                dot *= taus[j];
                at[(j, col)] -= dot;
                for i in (j + 1)..n {
                    let w = at[(i, j)];
                    at[(i, col)] -= dot * w;
                }
            }
        }
        Ok(Self { qr: at, taus, n, p })
    }

    fn apply_q_transpose(&self, v: &mut DVector<f64>) {
        for j in 0..self.p {
            let mut dot = v[j];
            for i in (j + 1)..self.n {
                dot += self.qr[(i, j)] * v[i];
            }
            dot *= self.taus[j];
            v[j] -= dot;
            for i in (j + 1)..self.n {
                v[i] -= dot * self.qr[(i, j)];
            }
        }
    }

    fn apply_q(&self, v: &mut DVector<f64>) {
        for j in (0..self.p).rev() {
            let mut dot = v[j];
            for i in (j + 1)..self.n {
                dot += self.qr[(i, j)] * v[i];
            }
            dot *= self.taus[j];
            v[j] -= dot;
            for i in (j + 1)..self.n {
                v[i] -= dot * self.qr[(i, j)];
            }
        }
    }

    /// Minimum-norm solution of `A x = b`, i.e. `Q [R⁻ᵀ b; 0]`.
    fn min_norm_solution(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut z = DVector::zeros(self.n);
        for i in 0..self.p {
            let mut acc = b[i];
            for k in 0..i {
                acc -= self.qr[(k, i)] * z[k];
            }
            z[i] = acc / self.qr[(i, i)];
        }
        self.apply_q(&mut z);
        z
    }

    /// Orthonormal basis of the null space of `A`: trailing columns
    /// of `Q`.
    fn null_basis(&self) -> DMatrix<f64> {
        let cols = self.n - self.p;
        let mut basis = DMatrix::zeros(self.n, cols);
        let mut work = DVector::zeros(self.n);
        for (idx, k) in (self.p..self.n).enumerate() {
            work.fill(0.0);
            work[k] = 1.0;
            self.apply_q(&mut work);
            basis.set_column(idx, &work);
        }
        basis
    }

    /// Least-squares solve of `Aᵀ λ = rhs` through the factorization.
    fn solve_duals(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let mut t = rhs.clone();
        self.apply_q_transpose(&mut t);
        let mut lam = DVector::zeros(self.p);
        for i in (0..self.p).rev() {
            let mut acc = t[i];
            for k in (i + 1)..self.p {
                acc -= self.qr[(i, k)] * lam[k];
            }
            lam[i] = acc / self.qr[(i, i)];
        }
        lam
    }
}

// ---------------------------------------------------------------------
// Goldfarb-Idnani dual active set on the reduced problem.
// ---------------------------------------------------------------------

struct GiOutcome {
    status: SolveStatus,
    y: DVector<f64>,
    duals: DVector<f64>,
    iterations: usize,
}

/// `min ½yᵀHy + cᵀy  s.t.  G y ≤ h` with `H` strictly convex.
fn goldfarb_idnani(
    h: &DMatrix<f64>,
    c: &DVector<f64>,
    g: &DMatrix<f64>,
    rhs: &DVector<f64>,
    max_activations: usize,
) -> Result<GiOutcome, ConvexError> {
    let n = c.len();
    let m = rhs.len();

    let chol = lower_cholesky(h)?;
    // J = L⁻ᵀ: its columns are rotated as constraints enter and leave
    // so that the active normals stay triangular in J coordinates.
    let mut j_mat = DMatrix::identity(n, n);
    for col in 0..n {
        let mut column = j_mat.column_mut(col);
        // Solve Lᵀ x = e_col.
        for i in (0..n).rev() {
            let mut acc = column[i];
            for k in (i + 1)..n {
                acc -= chol[(k, i)] * column[k];
            }
            column[i] = acc / chol[(i, i)];
        }
    }

    // Unconstrained minimizer.
    let mut y = -c.clone();
    solve_lower(&chol, &mut y);
    solve_lower_transpose(&chol, &mut y);

    let norms: Vec<f64> = (0..m)
        .map(|i| g.row(i).iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12))
        .collect();

    let mut r_mat = DMatrix::<f64>::zeros(n, n);
    let mut active: Vec<usize> = Vec::with_capacity(n);
    let mut duals_active: Vec<f64> = Vec::with_capacity(n);
    let mut slack = DVector::zeros(m);
    let mut d = DVector::zeros(n);
    let mut iterations = 0usize;

    'outer: loop {
        // Most violated constraint, scaled by the row norm.
        slack.copy_from(rhs);
        slack.gemv(-1.0, g, &y, 1.0);
        for &a in &active {
            slack[a] = 0.0;
        }
        let mut chosen = m;
        let mut worst = -1e-10;
        for i in 0..m {
            let v = slack[i] / norms[i];
            if v < worst {
                worst = v;
                chosen = i;
            }
        }
        if chosen == m {
            break 'outer;
        }
        if iterations >= max_activations {
            return Ok(GiOutcome {
                status: SolveStatus::MaxIterations,
                duals: scatter_duals(m, &active, &duals_active),
                y,
                iterations,
            });
        }
        iterations += 1;

        let normal = -g.row(chosen).transpose();
        let mut s_cur = slack[chosen]; // negative
        let mut u_plus = 0.0;

        loop {
            let q = active.len();
            d.gemv_tr(1.0, &j_mat, &normal, 0.0);

            // Primal step direction from the free part of J.
            let mut zdir = DVector::zeros(n);
            for col in q..n {
                let dk = d[col];
                if dk != 0.0 {
                    zdir.axpy(dk, &j_mat.column(col), 1.0);
                }
            }
            let dd: f64 = (q..n).map(|k| d[k] * d[k]).sum();

            // Dual step direction r = R⁻¹ d₁.
            let mut r_dir = vec![0.0; q];
            for i in (0..q).rev() {
                let mut acc = d[i];
                for k in (i + 1)..q {
                    acc -= r_mat[(i, k)] * r_dir[k];
                }
                r_dir[i] = acc / r_mat[(i, i)];
            }

            let mut t1 = f64::INFINITY;
            let mut blocking = usize::MAX;
            for (k, (&u_k, &r_k)) in duals_active.iter().zip(r_dir.iter()).enumerate() {
                if r_k > 1e-12 {
                    let step = u_k / r_k;
                    if step < t1 {
                        t1 = step;
                        blocking = k;
                    }
                }
            }
            let t2 = if dd <= f64::EPSILON { f64::INFINITY } else { -s_cur / dd };

            if !t1.is_finite() && !t2.is_finite() {
                return Ok(GiOutcome {
                    status: SolveStatus::Infeasible,
                    duals: scatter_duals(m, &active, &duals_active),
                    y,
                    iterations,
                });
            }
            let t = t1.min(t2);

            if t2.is_finite() {
                y.axpy(t, &zdir, 1.0);
                s_cur += t * dd;
            }
            for (u_k, &r_k) in duals_active.iter_mut().zip(r_dir.iter()) {
                *u_k -= t * r_k;
            }
            u_plus += t;

            if t >= t2 {
                // Full step: activate the constraint.
                givens_insert(q, &mut d, &mut j_mat);
                for row in 0..=q {
                    r_mat[(row, q)] = d[row];
                }
                active.push(chosen);
                duals_active.push(u_plus);
                continue 'outer;
            }

            // Partial step: deactivate the blocking constraint and retry.
            givens_delete(blocking, active.len(), &mut r_mat, &mut j_mat);
            active.remove(blocking);
            duals_active.remove(blocking);
        }
    }

    Ok(GiOutcome {
        status: SolveStatus::Optimal,
        duals: scatter_duals(m, &active, &duals_active),
        y,
        iterations,
    })
}

fn scatter_duals(m: usize, active: &[usize], values: &[f64]) -> DVector<f64> {
    let mut duals = DVector::zeros(m);
    for (&idx, &u) in active.iter().zip(values.iter()) {
        duals[idx] = u.max(0.0);
    }
    duals
}

fn lower_cholesky(h: &DMatrix<f64>) -> Result<DMatrix<f64>, ConvexError> {
    let n = h.nrows();
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut diag = h[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if diag <= 0.0 {
            return Err(ConvexError::NotPsd(format!(
                "reduced hessian not positive definite at pivot {j}"
            )));
        }
        let dsqrt = diag.sqrt();
        l[(j, j)] = dsqrt;
        for i in (j + 1)..n {
            let mut acc = h[(i, j)];
            for k in 0..j {
                acc -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = acc / dsqrt;
        }
    }
    Ok(l)
}

fn solve_lower(l: &DMatrix<f64>, v: &mut DVector<f64>) {
    let n = v.len();
    for i in 0..n {
        let mut acc = v[i];
        for k in 0..i {
            acc -= l[(i, k)] * v[k];
        }
        v[i] = acc / l[(i, i)];
    }
}

fn solve_lower_transpose(l: &DMatrix<f64>, v: &mut DVector<f64>) {
    let n = v.len();
    for i in (0..n).rev() {
        let mut acc = v[i];
        for k in (i + 1)..n {
            acc -= l[(k, i)] * v[k];
        }
        v[i] = acc / l[(i, i)];
    }
}

/// Rotate the trailing components of `d` (beyond position `q`) to zero
/// with Givens rotations, applying the same rotations to the columns
/// of `J` so that `Jᵀn` stays consistent.
fn givens_insert(q: usize, d: &mut DVector<f64>, j_mat: &mut DMatrix<f64>) {
    let n = d.len();
    for i in ((q + 1)..n).rev() {
        if d[i] == 0.0 {
            continue;
        }
        let (c, s, rho) = givens(d[i - 1], d[i]);
        d[i - 1] = rho;
        d[i] = 0.0;
        rotate_columns(j_mat, i - 1, i, c, s);
    }
}

/// Remove active column `k` from the triangular factor and restore
/// triangularity, rotating `J` along the way.
fn givens_delete(k: usize, q: usize, r_mat: &mut DMatrix<f64>, j_mat: &mut DMatrix<f64>) {
    // Shift columns left.
    for col in k..(q - 1) {
        for row in 0..=(col + 1) {
            r_mat[(row, col)] = r_mat[(row, col + 1)];
        }
    }
    for row in 0..q {
        r_mat[(row, q - 1)] = 0.0;
    }
    // Chase the subdiagonal introduced by the shift.
    for col in k..(q - 1) {
        let (c, s, rho) = givens(r_mat[(col, col)], r_mat[(col + 1, col)]);
        r_mat[(col, col)] = rho;
        r_mat[(col + 1, col)] = 0.0;
        for later in (col + 1)..(q - 1) {
            let a = r_mat[(col, later)];
            let b = r_mat[(col + 1, later)];
            r_mat[(col, later)] = c * a + s * b;
            r_mat[(col + 1, later)] = -s * a + c * b;
        }
        rotate_columns(j_mat, col, col + 1, c, s);
    }
}

#[inline]
fn givens(a: f64, b: f64) -> (f64, f64, f64) {
    if b == 0.0 {
        return (1.0, 0.0, a);
    }
    let rho = a.hypot(b).copysign(a);
    (a / rho, b / rho, rho)
}

#[inline]
fn rotate_columns(m: &mut DMatrix<f64>, i: usize, j: usize, c: f64, s: f64) {
    let n = m.nrows();
    for row in 0..n {
        let a = m[(row, i)];
        let b = m[(row, j)];
        m[(row, i)] = c * a + s * b;
        m[(row, j)] = -s * a + c * b;
    }
}
