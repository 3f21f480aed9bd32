//! Dense linear programming via the two-phase primal simplex method.
//!
//! Problems are converted to standard form (shift variables with a
//! finite lower bound, flip upper-bounded-only variables, split free
//! ones, slack every row) and pivoted with Bland's rule, which cannot
//! cycle. Row multipliers fall out of the final reduced costs of the
//! slack columns, so the certificate needs no extra factorization.

use super::{ConvexError, LinearProgram, SolveResult, SolveStatus, MAX_ITERATIONS};
use nalgebra::{DMatrix, DVector};

const PIVOT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-7;

#[derive(Clone, Copy)]
enum VarMap {
    /// `x = lb + x'`.
    Shift { col: usize, lb: f64 },
    /// `x = ub − x'`.
    Flip { col: usize, ub: f64 },
    /// `x = x'⁺ − x'⁻`.
    Split { pos: usize, neg: usize },
}

pub fn solve_lp(lp: &LinearProgram) -> Result<SolveResult, ConvexError> {
    lp.validate()?;
    let n = lp.num_vars();
    let m_orig = lp.ineq_mat.nrows();

    // Build the shifted/flipped structural columns and the row system
    // G'x' <= h' (original rows first, then upper-bound rows).
    let mut maps = Vec::with_capacity(n);
    let mut n_cols = 0usize;
    for j in 0..n {
        let (lo, hi) = (lp.lower[j], lp.upper[j]);
        if lo.is_finite() {
            maps.push(VarMap::Shift { col: n_cols, lb: lo });
            n_cols += 1;
        } else if hi.is_finite() {
            maps.push(VarMap::Flip { col: n_cols, ub: hi });
            n_cols += 1;
        } else {
            maps.push(VarMap::Split { pos: n_cols, neg: n_cols + 1 });
            n_cols += 2;
        }
    }

    let mut bound_rows: Vec<(usize, f64)> = Vec::new(); // (structural col, width)
    for j in 0..n {
        if let VarMap::Shift { col, lb } = maps[j] {
            if lp.upper[j].is_finite() {
                bound_rows.push((col, lp.upper[j] - lb));
            }
        }
    }
    let m = m_orig + bound_rows.len();

    let mut g = DMatrix::<f64>::zeros(m, n_cols);
    let mut h = DVector::<f64>::zeros(m);
    for i in 0..m_orig {
        let mut rhs = lp.ineq_rhs[i];
        for j in 0..n {
            let a = lp.ineq_mat[(i, j)];
            if a == 0.0 {
                continue;
            }
            match maps[j] {
                VarMap::Shift { col, lb } => {
                    g[(i, col)] = a;
                    rhs -= a * lb;
                }
                VarMap::Flip { col, ub } => {
                    g[(i, col)] = -a;
                    rhs -= a * ub;
                }
                VarMap::Split { pos, neg } => {
                    g[(i, pos)] = a;
                    g[(i, neg)] = -a;
                }
            }
        }
        h[i] = rhs;
    }
    for (r, &(col, width)) in bound_rows.iter().enumerate() {
        g[(m_orig + r, col)] = 1.0;
        h[m_orig + r] = width;
    }

    let mut cost = vec![0.0; n_cols];
    for j in 0..n {
        let c = lp.cost[j];
        match maps[j] {
            VarMap::Shift { col, .. } => cost[col] += c,
            VarMap::Flip { col, .. } => cost[col] -= c,
            VarMap::Split { pos, neg } => {
                cost[pos] += c;
                cost[neg] -= c;
            }
        }
    }

    // Standard-form tableau with slacks and, for negative right-hand
    // sides, artificials. Row flips are tracked only through the slack
    // coefficient sign.
    let n_total = n_cols + m;
    let mut art_of_row = vec![usize::MAX; m];
    let mut n_art = 0usize;
    for i in 0..m {
        if h[i] < 0.0 {
            art_of_row[i] = n_total + n_art;
            n_art += 1;
        }
    }
    let width = n_total + n_art;
    let mut t = DMatrix::<f64>::zeros(m, width + 1);
    let mut basis = vec![0usize; m];
    for i in 0..m {
        let flip = if h[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n_cols {
            t[(i, j)] = flip * g[(i, j)];
        }
        t[(i, n_cols + i)] = flip; // slack
        t[(i, width)] = flip * h[i];
        if art_of_row[i] != usize::MAX {
            t[(i, art_of_row[i])] = 1.0;
            basis[i] = art_of_row[i];
        } else {
            basis[i] = n_cols + i;
        }
    }

    let mut iterations = 0usize;

    if n_art > 0 {
        let mut phase1 = vec![0.0; width];
        for c in phase1.iter_mut().take(width).skip(n_total) {
            *c = 1.0;
        }
        match run_simplex(&mut t, &mut basis, &phase1, width, &mut iterations, width) {
            CoreStatus::Optimal => {}
            CoreStatus::Unbounded => unreachable!("phase-1 objective is bounded below"),
            CoreStatus::IterationCap => return Ok(failed(lp, SolveStatus::MaxIterations, iterations)),
        }
        let infeas: f64 = basis
            .iter()
            .enumerate()
            .filter(|(_, &b)| b >= n_total)
            .map(|(i, _)| t[(i, width)])
            .sum();
        if infeas > FEAS_TOL {
            return Ok(failed(lp, SolveStatus::Infeasible, iterations));
        }
    }

    // Phase 2 over the real cost, artificials barred from entering.
    let mut phase2 = vec![0.0; width];
    phase2[..n_cols].copy_from_slice(&cost);
    match run_simplex(&mut t, &mut basis, &phase2, n_total, &mut iterations, width) {
        CoreStatus::Optimal => {}
        CoreStatus::Unbounded => return Ok(failed(lp, SolveStatus::Unbounded, iterations)),
        CoreStatus::IterationCap => return Ok(failed(lp, SolveStatus::MaxIterations, iterations)),
    }

    // Recover the primal point.
    let mut xs = vec![0.0; width];
    for (i, &b) in basis.iter().enumerate() {
        xs[b] = t[(i, width)];
    }
    let mut x = DVector::zeros(n);
    for j in 0..n {
        x[j] = match maps[j] {
            VarMap::Shift { col, lb } => lb + xs[col],
            VarMap::Flip { col, ub } => ub - xs[col],
            VarMap::Split { pos, neg } => xs[pos] - xs[neg],
        };
    }

    // Row duals are the final reduced costs of the slack columns.
    let mut duals = DVector::zeros(m_orig);
    for i in 0..m_orig {
        duals[i] = reduced_cost(&t, &basis, &phase2, n_cols + i).max(0.0);
    }

    Ok(SolveResult {
        status: SolveStatus::Optimal,
        objective: lp.cost.dot(&x),
        x,
        eq_duals: DVector::zeros(0),
        ineq_duals: duals,
        iterations,
    })
}

fn failed(lp: &LinearProgram, status: SolveStatus, iterations: usize) -> SolveResult {
    SolveResult {
        status,
        x: DVector::zeros(lp.num_vars()),
        eq_duals: DVector::zeros(0),
        ineq_duals: DVector::zeros(lp.ineq_mat.nrows()),
        objective: f64::NAN,
        iterations,
    }
}

enum CoreStatus {
    Optimal,
    Unbounded,
    IterationCap,
}

fn reduced_cost(t: &DMatrix<f64>, basis: &[usize], cost: &[f64], col: usize) -> f64 {
    let mut r = cost[col];
    for (i, &b) in basis.iter().enumerate() {
        let cb = cost[b];
        if cb != 0.0 {
            r -= cb * t[(i, col)];
        }
    }
    r
}

/// Bland-rule simplex on the tableau; columns at index >= `enter_limit`
/// may not enter the basis.
fn run_simplex(
    t: &mut DMatrix<f64>,
    basis: &mut [usize],
    cost: &[f64],
    enter_limit: usize,
    iterations: &mut usize,
    width: usize,
) -> CoreStatus {
    let m = basis.len();
    loop {
        if *iterations >= MAX_ITERATIONS {
            return CoreStatus::IterationCap;
        }
        // Entering column: smallest index with negative reduced cost.
        let mut entering = usize::MAX;
        for j in 0..enter_limit {
            if basis.contains(&j) {
                continue;
            }
            if reduced_cost(t, basis, cost, j) < -PIVOT_TOL {
                entering = j;
                break;
            }
        }
        if entering == usize::MAX {
            return CoreStatus::Optimal;
        }

        // Leaving row: minimum ratio, ties to the smallest basis index.
        let mut leaving = usize::MAX;
        let mut best = f64::INFINITY;
        for i in 0..m {
            let a = t[(i, entering)];
            if a > PIVOT_TOL {
                let ratio = t[(i, width)] / a;
                if ratio < best - 1e-12
                    || (ratio < best + 1e-12 && leaving != usize::MAX && basis[i] < basis[leaving])
                {
                    best = ratio;
                    leaving = i;
                }
            }
        }
        if leaving == usize::MAX {
            return CoreStatus::Unbounded;
        }

        *iterations += 1;
        pivot(t, leaving, entering);
        basis[leaving] = entering;
    }
}

fn pivot(t: &mut DMatrix<f64>, row: usize, col: usize) {
    let (m, w) = (t.nrows(), t.ncols());
    let p = t[(row, col)];
    for j in 0..w {
        t[(row, j)] /= p;
    }
    for i in 0..m {
        if i == row {
            continue;
        }
        let f = t[(i, col)];
        if f != 0.0 {
            for j in 0..w {
                t[(i, j)] -= f * t[(row, j)];
            }
            t[(i, col)] = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex::{lp_kkt_residuals, KKT_TOL};
    use approx::assert_abs_diff_eq;
    use nalgebra::{dmatrix, dvector};

    fn box_lp(c: f64) -> LinearProgram {
        LinearProgram {
            cost: dvector![c],
            ineq_mat: DMatrix::zeros(0, 1),
            ineq_rhs: dvector![],
            lower: dvector![0.0],
            upper: dvector![2.0],
        }
    }

    #[test]
    fn box_min_and_max() {
        let r = solve_lp(&box_lp(1.0)).unwrap();
        assert!(r.is_optimal());
        assert_abs_diff_eq!(r.x[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.objective, 0.0, epsilon = 1e-12);

        // Maximizing rho == minimizing -rho.
        let r = solve_lp(&box_lp(-1.0)).unwrap();
        assert!(r.is_optimal());
        assert_abs_diff_eq!(r.x[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.objective, -2.0, epsilon = 1e-12);
    }

    #[test]
    fn small_lp_known_vertex() {
        // min -x - 2y  s.t. x + y <= 4, x <= 2, x,y >= 0: all weight
        // goes to y, so the optimum sits at (0, 4) with value -8.
        let lp = LinearProgram {
            cost: dvector![-1.0, -2.0],
            ineq_mat: dmatrix![1.0, 1.0; 1.0, 0.0],
            ineq_rhs: dvector![4.0, 2.0],
            lower: dvector![0.0, 0.0],
            upper: dvector![f64::INFINITY, f64::INFINITY],
        };
        let r = solve_lp(&lp).unwrap();
        assert!(r.is_optimal());
        assert_abs_diff_eq!(r.x[0], 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(r.x[1], 4.0, epsilon = 1e-10);
        assert_abs_diff_eq!(r.objective, -8.0, epsilon = 1e-10);
        let kkt = lp_kkt_residuals(&lp, &r.x, &r.ineq_duals);
        assert!(kkt.worst() <= KKT_TOL, "kkt {:?}", kkt);
    }

    #[test]
    fn negative_rhs_needs_phase_one() {
        // x >= 1 written as -x <= -1, with free-ish bounds.
        let lp = LinearProgram {
            cost: dvector![1.0],
            ineq_mat: dmatrix![-1.0],
            ineq_rhs: dvector![-1.0],
            lower: dvector![0.0],
            upper: dvector![10.0],
        };
        let r = solve_lp(&lp).unwrap();
        assert!(r.is_optimal());
        assert_abs_diff_eq!(r.x[0], 1.0, epsilon = 1e-10);
        let kkt = lp_kkt_residuals(&lp, &r.x, &r.ineq_duals);
        assert!(kkt.worst() <= KKT_TOL);
    }

    #[test]
    fn free_variable_split() {
        // min x s.t. x >= -3 as a row, variable unbounded.
        let lp = LinearProgram {
            cost: dvector![1.0],
            ineq_mat: dmatrix![-1.0],
            ineq_rhs: dvector![3.0],
            lower: dvector![f64::NEG_INFINITY],
            upper: dvector![f64::INFINITY],
        };
        let r = solve_lp(&lp).unwrap();
        assert!(r.is_optimal());
        assert_abs_diff_eq!(r.x[0], -3.0, epsilon = 1e-10);
    }

    #[test]
    fn infeasible_and_unbounded_detected() {
        let lp = LinearProgram {
            cost: dvector![1.0],
            ineq_mat: dmatrix![1.0; -1.0],
            ineq_rhs: dvector![1.0, -2.0], // x <= 1 and x >= 2
            lower: dvector![0.0],
            upper: dvector![10.0],
        };
        assert_eq!(solve_lp(&lp).unwrap().status, SolveStatus::Infeasible);

        let lp = LinearProgram {
            cost: dvector![-1.0],
            ineq_mat: DMatrix::zeros(0, 1),
            ineq_rhs: dvector![],
            lower: dvector![0.0],
            upper: dvector![f64::INFINITY],
        };
        assert_eq!(solve_lp(&lp).unwrap().status, SolveStatus::Unbounded);
    }

    #[test]
    fn flipped_variable_upper_bound_only() {
        // Only an upper bound is finite: x <= 5, minimize -x.
        let lp = LinearProgram {
            cost: dvector![-1.0],
            ineq_mat: DMatrix::zeros(0, 1),
            ineq_rhs: dvector![],
            lower: dvector![f64::NEG_INFINITY],
            upper: dvector![5.0],
        };
        let r = solve_lp(&lp).unwrap();
        assert!(r.is_optimal());
        assert_abs_diff_eq!(r.x[0], 5.0, epsilon = 1e-12);
    }
}
