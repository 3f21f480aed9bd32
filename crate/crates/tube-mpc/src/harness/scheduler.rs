//! Deterministic multi-rate closed-loop executive.
//!
//! One thread advances simulated time in inner-loop steps (500 Hz).
//! The sliding controller and the plant run every step; identification
//! ticks every tenth step (50 Hz); the planner runs as a
//! latency-annotated task: it snapshots state when a solve is
//! requested, and its plan is swapped in atomically one latency later,
//! seeded from the predicted point on the previous plan at that
//! instant. Event order within a step is fixed, so a run is a pure
//! function of the scenario and seed.

use super::logs::{BoxRecord, CycleRecord, LogRow, RunLog, SolveRecord};
use super::scenario::{ControllerKind, Scenario};
use crate::ancillary::{self, TubeState};
use crate::mpc::{self, InitialCondition, MpcError, PlannedTrajectory, Target};
use crate::plant::{self, DisturbanceSampler, PlantState};
use crate::smid::SmidEngine;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("planner failed beyond the fallback budget at t = {t:.3}: {source}")]
    PlannerExhausted { t: f64, source: MpcError },
    #[error("bootstrap solve failed: {0}")]
    Bootstrap(MpcError),
    #[error("plant rejected input at t = {t:.3}: {source}")]
    Plant { t: f64, source: plant::PlantError },
    #[error("controller fault at t = {t:.3}: {source}")]
    Controller { t: f64, source: ancillary::AncillaryError },
    #[error("identification fault at t = {t:.3}: {source}")]
    Smid { t: f64, source: crate::smid::SmidError },
    #[error("true parameters escaped the published box at t = {t:.3} (D underestimated)")]
    Containment { t: f64 },
}

const MAX_CONSECUTIVE_PLANNER_FAILURES: usize = 5;

struct PendingPlan {
    t_apply: f64,
    result: Result<PlannedTrajectory, MpcError>,
    record: SolveRecord,
}

/// Runs one closed-loop scenario to termination.
pub fn run_closed_loop(scenario: &Scenario) -> Result<RunLog, RunError> {
    let sc = scenario;
    let h = sc.inner_dt;
    let lambda = sc.gains.lambda;
    let mut log = RunLog::default();

    // RNG streams: the disturbance sampler owns one seeded stream; the
    // measurement-noise stream is derived from the run seed.
    let mut sampler = DisturbanceSampler::new(sc.disturbance.clone());
    let mut noise_rng = ChaCha8Rng::seed_from_u64(sc.seed ^ 0x9E37_79B9_7F4A_7C15);

    let mut state = PlantState::at_rest(0.0);
    let mut target_idx = 0usize;
    let mut model = sc.ocp.model.clone();
    let mut ocp = sc.ocp.clone();
    ocp.target = Target::rest_at(sc.setpoints[0], &sc.nominal);

    // Identification (adaptive runs only).
    let mut smid: Option<SmidEngine> = sc.smid.as_ref().map(|setup| {
        SmidEngine::new(setup.initial, setup.cfg, h, sc.nominal.mass, sc.nominal.gravity)
    });
    if let Some(engine) = &smid {
        log.boxes.push(BoxRecord { t: 0.0, bounds: *engine.published() });
    }
    let truth =
        [sc.plant.inertia, sc.plant.lever, sc.plant.drag_true, sc.plant.com_distance];

    // Bootstrap solve, synchronous at t = 0.
    let mut boot_ocp = ocp.clone();
    boot_ocp.scp.max_iterations = sc.bootstrap_iterations;
    let ic0 = {
        let alpha0 = match sc.fixed_tube {
            Some(t) => t.alpha,
            None => mpc::resting_alpha(&boot_ocp, state.theta),
        };
        let drive = model.delta_total(state.theta, state.theta_dot)
            + model.d_bound
            + sc.gains.eta;
        InitialCondition {
            theta: state.theta,
            theta_dot: state.theta_dot,
            phi: match sc.fixed_tube {
                Some(t) => t.phi,
                None => drive / alpha0,
            },
            omega: 1e-4,
            u_prev: None,
            alpha_prev: None,
        }
    };
    let mut active_plan = solve_plan(sc, &boot_ocp, &ic0, 0.0, None).map_err(RunError::Bootstrap)?;
    log.solves.push(SolveRecord {
        t_request: 0.0,
        t_apply: 0.0,
        ok: true,
        scp_iterations: active_plan.meta.scp_iterations,
        qp_activations: active_plan.meta.qp_activations,
        violation: active_plan.meta.violation,
    });

    let mut pending: Option<PendingPlan> = None;
    let mut next_request_t = 0.0;
    let mut consecutive_failures = 0usize;

    // Steady-state and adaptation bookkeeping. Arrival is judged on a
    // half-second moving average so zero-mean disturbance wiggle does
    // not hold the detector off forever.
    let window_steps = (0.5 / h).round() as usize;
    let mut win_theta = std::collections::VecDeque::with_capacity(window_steps);
    let mut win_w = std::collections::VecDeque::with_capacity(window_steps);
    let mut sum_theta = 0.0;
    let mut sum_w = 0.0;
    let mut steady_since: Option<f64> = None;
    let mut cycle_start_t = 0.0;
    let mut cycle_start_row = 0usize;
    let mut last_publication_t = 0.0;
    let mut reached_steady = false;
    let mut aborted: Option<String> = None;

    let total_steps = (sc.max_time / h).round() as usize;
    let mut t = 0.0;

    for step in 0..total_steps {
        t = step as f64 * h;

        // 1. Apply a finished solve.
        if let Some(p) = &pending {
            if t + 0.5 * h >= p.t_apply {
                let p = pending.take().unwrap();
                log.solves.push(p.record);
                match p.result {
                    Ok(plan) => {
                        active_plan = plan;
                        consecutive_failures = 0;
                    }
                    Err(e) => {
                        consecutive_failures += 1;
                        log.outcome.planner_fallbacks += 1;
                        if consecutive_failures >= MAX_CONSECUTIVE_PLANNER_FAILURES {
                            return Err(RunError::PlannerExhausted { t, source: e });
                        }
                    }
                }
            }
        }

        // 2. Request the next solve; in simulation the work happens on
        //    the spot and the result is held until the latency expires.
        if pending.is_none() && t + 0.5 * h >= next_request_t {
            let t_apply = t + sc.planner_latency;
            let handoff = active_plan.sample(t_apply);
            // Predict the tracking-error bound at the handoff instant
            // by propagating the current error through the tube filter.
            let mut omega0 = (state.theta - active_plan.sample(t).theta).abs().max(1e-4);
            let sub_steps = 8;
            let dtau = sc.planner_latency / sub_steps as f64;
            for i in 0..sub_steps {
                let phi_mid = active_plan.sample(t + (i as f64 + 0.5) * dtau).tube.phi;
                // Trapezoidal step of Ω̇ = −λΩ + Φ.
                omega0 = (omega0 * (1.0 - 0.5 * dtau * lambda) + dtau * phi_mid)
                    / (1.0 + 0.5 * dtau * lambda);
            }
            let ic = InitialCondition {
                theta: handoff.theta,
                theta_dot: handoff.theta_dot,
                phi: match sc.fixed_tube {
                    Some(tbe) => tbe.phi,
                    None => handoff.tube.phi,
                },
                omega: omega0,
                u_prev: Some(handoff.u),
                alpha_prev: Some(handoff.tube.alpha),
            };
            ocp.model = model.clone();
            ocp.target = Target::rest_at(sc.setpoints[target_idx], &sc.nominal);
            let result = solve_plan(sc, &ocp, &ic, t_apply, Some(&active_plan));
            let record = SolveRecord {
                t_request: t,
                t_apply,
                ok: result.is_ok(),
                scp_iterations: result.as_ref().map(|p| p.meta.scp_iterations).unwrap_or(0),
                qp_activations: result.as_ref().map(|p| p.meta.qp_activations).unwrap_or(0),
                violation: result.as_ref().map(|p| p.meta.violation).unwrap_or(f64::NAN),
            };
            pending = Some(PendingPlan { t_apply, result, record });
            next_request_t = t_apply;
        }

        // 3. Identification tick (50 Hz).
        if let Some(engine) = smid.as_mut() {
            if step % sc.smid_every == 0 && step > 0 {
                match engine.tick() {
                    Ok(Some(published)) => {
                        log.boxes.push(BoxRecord { t, bounds: published });
                        last_publication_t = t;
                        if !published.contains(truth) {
                            return Err(RunError::Containment { t });
                        }
                        // Refresh the controller's drag model from the
                        // published interval: midpoint and half-width.
                        let (lo, hi) = published.drag_interval();
                        model.drag_nominal = 0.5 * (lo + hi);
                        model.drag_error = 0.5 * (hi - lo);
                    }
                    Ok(None) => {}
                    Err(e) => return Err(RunError::Smid { t, source: e }),
                }
                log.outcome.smid_rejected_batches = engine.rejected_batches;
            }
        }

        // 4. Termination logic: steady-state detection and setpoint
        //    cycling.
        if win_theta.len() == window_steps {
            sum_theta -= win_theta.pop_front().unwrap();
            sum_w -= win_w.pop_front().unwrap();
        }
        win_theta.push_back(state.theta);
        win_w.push_back(state.theta_dot);
        sum_theta += state.theta;
        sum_w += state.theta_dot;
        let navg = win_theta.len() as f64;
        let target = sc.setpoints[target_idx];
        let at_setpoint = win_theta.len() == window_steps
            && (sum_theta / navg - target).abs() <= sc.steady_angle_tol
            && (sum_w / navg).abs() <= sc.steady_speed_tol;
        if at_setpoint {
            if steady_since.is_none() {
                steady_since = Some(t);
            }
        } else {
            steady_since = None;
        }
        let settled = steady_since.is_some_and(|s0| t - s0 >= sc.steady_window);
        if settled {
            log.cycles.push(CycleRecord {
                start_t: cycle_start_t,
                end_t: t,
                target,
                drag_upper_at_start: drag_upper(&log, cycle_start_t),
                row_start: cycle_start_row,
                row_end: log.rows.len(),
            });
            if sc.setpoints.len() > 1 {
                // Cycle to the next setpoint.
                target_idx = (target_idx + 1) % sc.setpoints.len();
                cycle_start_t = t;
                cycle_start_row = log.rows.len();
                steady_since = None;
                win_theta.clear();
                win_w.clear();
                sum_theta = 0.0;
                sum_w = 0.0;
            } else {
                reached_steady = true;
                break;
            }
        }
        // Adaptation ends when identification has been quiet for the
        // configured window; each setpoint must have been visited twice
        // first, so a slow early publication cadence is not mistaken
        // for convergence.
        if smid.is_some()
            && log.cycles.len() >= 2 * sc.setpoints.len()
            && t - last_publication_t >= sc.quiescence_window
        {
            reached_steady = settled || !log.cycles.is_empty();
            break;
        }

        // 5. Control step from the (optionally noisy) measured state.
        let measured = if sc.measurement_noise > 0.0 {
            PlantState {
                theta: state.theta + noise_rng.gen_range(-1.0..=1.0) * sc.measurement_noise,
                ..state
            }
        } else {
            state
        };
        let reference = active_plan.sample(t);
        let tube = TubeState {
            phi: reference.tube.phi,
            omega: reference.tube.omega,
            alpha: reference.tube.alpha,
        };
        let s_var = ancillary::sliding_variable(&measured, &reference, lambda);
        let u = ancillary::blsc_input(
            &measured,
            &reference,
            &tube,
            &sc.gains,
            &model,
            &sc.nominal,
            sc.ocp.u_max,
        )
        .map_err(|source| RunError::Controller { t, source })?;

        // 6. Disturbance draw, held across the step.
        let d = sampler.sample(t, state.theta);

        log.rows.push(LogRow {
            t,
            theta: state.theta,
            theta_dot: state.theta_dot,
            u,
            u_star: reference.u,
            s: s_var,
            phi: tube.phi,
            omega: tube.omega,
            alpha: tube.alpha,
            d,
            theta_ref: reference.theta,
            theta_dot_ref: reference.theta_dot,
        });

        // 7. Identification sample (aligned channels).
        if let Some(engine) = smid.as_mut() {
            engine.push_sample(measured.theta, measured.theta_dot, u, t);
        }

        // 8. Plant step.
        state = plant::integrate_step(&state, u, d, h, &sc.plant)
            .map_err(|source| RunError::Plant { t, source })?;
    }

    if !reached_steady && aborted.is_none() && t >= sc.max_time - 2.0 * h {
        aborted = Some("time limit before steady state".into());
    }
    log.outcome.end_time = t;
    log.outcome.reached_steady = reached_steady;
    log.outcome.aborted = aborted;
    Ok(log)
}

fn solve_plan(
    sc: &Scenario,
    ocp: &mpc::OcpConfig,
    ic: &InitialCondition,
    t0: f64,
    warm: Option<&PlannedTrajectory>,
) -> Result<PlannedTrajectory, MpcError> {
    match (sc.controller, &sc.fixed_tube) {
        (ControllerKind::Tmpc, Some(tube)) => mpc::solve_tmpc(ocp, tube, ic, t0, warm),
        _ => mpc::solve_dtmpc(ocp, ic, t0, warm),
    }
}

/// Published drag upper bound in effect at time `t`, for cycle tagging.
fn drag_upper(log: &RunLog, t: f64) -> f64 {
    log.boxes
        .iter()
        .rev()
        .find(|b| b.t <= t)
        .map(|b| b.bounds.drag_interval().1)
        .unwrap_or(f64::NAN)
}
