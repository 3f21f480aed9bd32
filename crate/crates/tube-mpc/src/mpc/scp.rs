//! Sequential convex programming loop.
//!
//! Each pass linearizes about the incumbent, solves the trust-regioned
//! QP, and evaluates the true nonlinear violation at the candidate.
//! Steps are accepted while the violation stays within the larger of
//! the incumbent violation and a small acceptance band; rejected steps
//! shrink the trust region, accepted ones grow it. Because the
//! linearization is exact at its own expansion point, the violation of
//! the fixed point is zero and the polish to the return tolerance
//! happens automatically as steps contract.

use super::transcription::Transcription;
use super::{MpcError, PlannedTrajectory, SolveMeta};
use crate::convex::{solve_qp_capped, SolveStatus};

pub(crate) fn solve(
    tr: &Transcription,
    t0: f64,
    warm: Option<&PlannedTrajectory>,
) -> Result<PlannedTrajectory, MpcError> {
    let s = tr.cfg.scp;
    let mut z = match warm {
        Some(plan) => tr.guess_from_plan(plan, t0),
        None => tr.hover_guess(),
    };
    let mut viol = tr.violation(&z);
    let mut trust = s.trust_init;
    let mut iterations = 0usize;
    let mut qp_activations = 0usize;
    let mut accepted = vec![viol];
    // Exact-penalty merit over the true (never linearized) cost;
    // requiring strict merit descent rules out the limit cycles a pure
    // violation-decrease rule admits around the moving linearized
    // optimum. When the trust region bottoms out with the iterate still
    // infeasible, the penalty weight is escalated so feasibility
    // repairs stop losing to cost increases.
    let mut penalty = s.merit_penalty;
    let mut merit = tr.cost(&z) + penalty * viol;
    let mut escalations = 0usize;

    while iterations < s.max_iterations {
        iterations += 1;
        let sub = tr.build_condensed(&z, trust);
        let sol = solve_qp_capped(&sub.qp, s.qp_activation_cap)?;
        match sol.status {
            SolveStatus::Optimal => {}
            SolveStatus::Infeasible | SolveStatus::MaxIterations | SolveStatus::Unbounded => {
                // With a proximal trust term the feasible set does not
                // depend on the radius, so an infeasibility verdict at
                // loose damping is usually conditioning; retry stiffer.
                trust *= s.trust_shrink;
                if trust < s.trust_min {
                    return match sol.status {
                        SolveStatus::Infeasible => Err(MpcError::Infeasible),
                        _ => Err(MpcError::NoConvergence { iterations, violation: viol }),
                    };
                }
                continue;
            }
        }
        qp_activations += sol.iterations;

        let candidate = tr.expand(&sub, &sol.x);
        let step = tr.step_norm(&candidate, &z);
        let new_viol = tr.violation(&candidate);
        let new_merit = tr.cost(&candidate) + penalty * new_viol;
        if std::env::var("SCP_TRACE").is_ok() {
            eprintln!("iter {iterations}: trust={trust:.4} step={step:.5} viol={viol:.3e}->{new_viol:.3e} merit={merit:.6}->{new_merit:.6}");
        }
        // Full step first; on rejection, backtrack along the segment.
        // Linear-row residuals scale by (1 − τ) on partial steps while
        // linearization errors scale by τ², so some fraction always
        // makes progress from an infeasible iterate.
        let mut taken = None;
        let mut tau = 1.0;
        for _ in 0..6 {
            let probe = if tau == 1.0 {
                candidate.clone()
            } else {
                &z * (1.0 - tau) + &candidate * tau
            };
            let p_viol = tr.violation(&probe);
            let p_merit = tr.cost(&probe) + penalty * p_viol;
            let within_band = p_viol <= viol.max(s.violation_accept) + 1e-12;
            if within_band && p_merit < merit - 1e-12 {
                taken = Some((probe, p_viol, p_merit, tau));
                break;
            }
            tau *= 0.5;
        }
        if let Some((probe, p_viol, p_merit, tau)) = taken {
            let gain = merit - p_merit;
            z = probe;
            viol = p_viol;
            merit = p_merit;
            accepted.push(viol);
            if tau == 1.0 {
                trust = (trust * s.trust_grow).min(s.trust_cap);
            } else {
                // The full step was too ambitious for the band; damp the
                // next subproblem instead of nibbling along this one.
                trust = (trust * s.trust_shrink).max(s.trust_min);
            }
            if viol < s.violation_tol
                && (step * tau < s.step_tol || gain < 3e-4 * (1.0 + merit.abs()))
            {
                // Either the iteration contracted or the merit gain per
                // pass has flattened out; the iterate is feasible to
                // tolerance, so stop polishing.
                break;
            }
        } else {
            trust *= s.trust_shrink;
            if trust < s.trust_min {
                if viol > s.violation_tol && escalations < 3 {
                    escalations += 1;
                    penalty *= 10.0;
                    merit = tr.cost(&z) + penalty * viol;
                    trust = s.trust_init;
                    continue;
                }
                break;
            }
        }
    }

    if viol > s.violation_tol {
        if std::env::var("SCP_TRACE").is_ok() {
            let (what, v) = tr.violation_report(&z);
            eprintln!("scp stalled: worst constraint {what} = {v:.3e}");
        }
        return Err(MpcError::NoConvergence { iterations, violation: viol });
    }
    let knots = tr.unpack(&z, t0)?;
    Ok(PlannedTrajectory {
        t0,
        dt: tr.cfg.dt,
        knots,
        meta: SolveMeta {
            scp_iterations: iterations,
            qp_activations,
            trust_radius: trust,
            violation: viol,
            accepted_violations: accepted,
        },
    })
}
