//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line with the measured numbers. Tolerances are pinned in
//! code; a failure here is a release blocker, not a flaky test.

use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use tube_mpc::convex::{
    lp_kkt_residuals, qp_kkt_residuals, solve_lp, solve_qp, LinearProgram, QuadraticProgram,
    SolveStatus,
};
use tube_mpc::harness::{
    compute_metrics, compute_metrics_slice, run_batch, run_comparison, Config, ControllerKind,
    RunJob, RunLog, Scenario,
};
use tube_mpc::mpc::{self, tmpc_fixed_tube, InitialCondition, MpcError, Target, Transcription, TubeMode};

fn verdict(criterion: &str, pass: bool, details: &str) -> bool {
    println!("[{}] {criterion}: {details}", if pass { "PASS" } else { "FAIL" });
    pass
}

// ---------------------------------------------------------------------
// Criterion 1 — tube invariance over seeded regional-disturbance runs.
// ---------------------------------------------------------------------

#[test]
fn criterion_1_tube_invariance() {
    let seeds = 100u64;
    let mut jobs = Vec::new();
    for controller in [ControllerKind::Tmpc, ControllerKind::Dtmpc, ControllerKind::Adtmpc] {
        let mut cfg = Config::for_scenario("b").unwrap();
        if controller.uses_smid() {
            // Identification must overbound the full regional + base
            // disturbance it experiences in this scenario.
            cfg.smid.d_id = 30.0;
        }
        for seed in 0..seeds {
            jobs.push(RunJob { config: cfg.clone(), controller, seed: 1000 + seed });
        }
    }
    let results = run_batch(&jobs);

    let mut worst_tube = f64::NEG_INFINITY;
    let mut worst_layer = f64::NEG_INFINITY;
    let mut failures = Vec::new();
    for (job, result) in jobs.iter().zip(results.iter()) {
        match result {
            Ok(log) => {
                for row in &log.rows {
                    worst_tube = worst_tube.max(row.tracking_error() - row.omega);
                    worst_layer = worst_layer.max(row.s.abs() - row.phi * (1.0 + 1e-3));
                }
            }
            Err(e) => failures.push(format!("{} seed {}: {e}", job.controller, job.seed)),
        }
    }
    let pass = failures.is_empty() && worst_tube <= 1e-3 && worst_layer <= 0.0;
    let details = format!(
        "{} runs x3 controllers; max(|err|-omega) = {worst_tube:.2e} (tol 1e-3), \
         max(|s|-phi(1+1e-3)) = {worst_layer:.2e}; {} run failures",
        seeds,
        failures.len()
    );
    assert!(verdict("criterion 1 (tube invariance)", pass, &details), "{failures:?}");
}

// ---------------------------------------------------------------------
// Criteria 2 and 3 — paired controller comparisons.
// ---------------------------------------------------------------------

#[test]
fn criterion_2_restricted_tube_comparison() {
    let cfg = Config::for_scenario("a").unwrap();
    let out = run_comparison(&cfg, 10, 2000).expect("scenario A comparison");
    let (tmpc, dtmpc) = (&out.comparison.mean_a, &out.comparison.mean_b);
    let effort_ratio = dtmpc.control_effort / tmpc.control_effort;
    let speed_ratio = dtmpc.max_speed / tmpc.max_speed;
    let pass = effort_ratio <= 0.85 && speed_ratio >= 1.3;
    let details = format!(
        "10 seeds: effort DTMPC/TMPC = {effort_ratio:.3} (need <= 0.85; efforts {:.3}/{:.3}), \
         max-speed ratio = {speed_ratio:.2} (need >= 1.3; speeds {:.2}/{:.2})",
        dtmpc.control_effort, tmpc.control_effort, dtmpc.max_speed, tmpc.max_speed
    );
    assert!(verdict("criterion 2 (scenario A comparison)", pass, &details));
}

#[test]
fn criterion_3_regional_disturbance_comparison() {
    let cfg = Config::for_scenario("b").unwrap();
    let out = run_comparison(&cfg, 20, 3000).expect("scenario B comparison");
    let (tmpc, dtmpc) = (&out.comparison.mean_a, &out.comparison.mean_b);
    let effort_ratio = dtmpc.control_effort / tmpc.control_effort;
    let over_accuracy = tmpc.mean_tracking_error_deg <= dtmpc.mean_tracking_error_deg;
    let pass = effort_ratio <= 0.85 && over_accuracy;
    let details = format!(
        "20 seeds: effort DTMPC/TMPC = {effort_ratio:.3} (need <= 0.85; efforts {:.3}/{:.3}), \
         tracking error TMPC {:.3} deg <= DTMPC {:.3} deg: {over_accuracy}",
        dtmpc.control_effort,
        tmpc.control_effort,
        tmpc.mean_tracking_error_deg,
        dtmpc.mean_tracking_error_deg
    );
    assert!(verdict("criterion 3 (scenario B comparison)", pass, &details));
}

// ---------------------------------------------------------------------
// Criterion 4 — fixed-tube bandwidth rejection, closed form.
// ---------------------------------------------------------------------

#[test]
fn criterion_4_tight_band_rejection() {
    let mut cfg = Config::for_scenario("b").unwrap();
    cfg.scenario.omega_max = 0.05;
    let scenario_err = Scenario::build(&cfg, ControllerKind::Tmpc, 0);
    // The scenario layer falls back to a feasible bound, so probe the
    // rejection itself on the raw constructor.
    let sc_ok = Scenario::build(&cfg, ControllerKind::Dtmpc, 0).unwrap();
    let err = tmpc_fixed_tube(&sc_ok.ocp, 20.0).unwrap_err();
    let (alpha_required, alpha_max) = match err {
        MpcError::TubeTooTight { alpha_required, alpha_max } => (alpha_required, alpha_max),
        other => panic!("expected tube rejection, got {other}"),
    };
    let pass = (alpha_required - 200.5).abs() <= 1e-9 && alpha_max == 140.0;
    let details = format!(
        "alpha required = {alpha_required:.10} 1/s (pinned 200.5 +- 1e-9) > alpha_max = {alpha_max}; \
         scenario-level fallback engaged: {}",
        scenario_err.is_ok()
    );
    assert!(verdict("criterion 4 (tight-band rejection)", pass, &details));
}

// ---------------------------------------------------------------------
// Criterion 5 — adaptation contraction with containment.
// ---------------------------------------------------------------------

fn contraction_config() -> Config {
    let mut cfg = Config::for_scenario("adapt").unwrap();
    // Reference-table prior: drag in [0, 2] g m^2, midpoint model.
    cfg.smid.drag_lo = 0.0;
    cfg.smid.drag_hi = 2.0e-3;
    cfg.scenario.drag_nominal = 1.0e-3;
    cfg.scenario.drag_error = 1.0e-3;
    // Tight identification bound over a quiet background.
    cfg.smid.d_id = 2.0;
    cfg.scenario.base_bound = 0.4;
    cfg.plant.measurement_noise = 3.0e-7;
    cfg
}

#[test]
fn criterion_5_adaptation_contraction() {
    let cfg = contraction_config();
    let scenario = Scenario::build(&cfg, ControllerKind::Adtmpc, 77).unwrap();
    let log = tube_mpc::harness::run_closed_loop(&scenario).expect("adaptation run");
    let truth = [
        scenario.plant.inertia,
        scenario.plant.lever,
        scenario.plant.drag_true,
        scenario.plant.com_distance,
    ];
    let mut contained = true;
    let mut monotone = true;
    for pair in log.boxes.windows(2) {
        let (prev, next) = (&pair[0].bounds, &pair[1].bounds);
        for p in 0..4 {
            if next.hi[p] - next.lo[p] > prev.hi[p] - prev.lo[p] + 1e-15 {
                monotone = false;
            }
        }
    }
    for b in &log.boxes {
        if !b.bounds.contains(truth) {
            contained = false;
        }
    }
    let (lo, hi) = log.boxes.last().unwrap().bounds.drag_interval();
    let width = hi - lo;
    let pass = contained && monotone && width <= 0.2 * 2.0e-3;
    let details = format!(
        "final drag width {:.3} g m^2 (need <= 0.4 = 20% of [0,2]); truth contained at all {} \
         publications: {contained}; widths non-increasing: {monotone}",
        width * 1e3,
        log.boxes.len()
    );
    assert!(verdict("criterion 5 (adaptation contraction)", pass, &details));
}

// ---------------------------------------------------------------------
// Criterion 6 — per-band performance trend during adaptation.
// ---------------------------------------------------------------------

#[test]
fn criterion_6_adaptation_trend() {
    let cfg = Config::for_scenario("adapt").unwrap();
    let scenario = Scenario::build(&cfg, ControllerKind::Adtmpc, 11).unwrap();
    let log = tube_mpc::harness::run_closed_loop(&scenario).expect("adaptation run");

    // Band index by published drag upper bound (g m^2): 0: [4,6],
    // 1: [2,4), 2: [0,2).
    let band_of = |upper_g: f64| -> Option<usize> {
        if (4.0..=6.0 + 1e-9).contains(&upper_g) {
            Some(0)
        } else if (2.0..4.0).contains(&upper_g) {
            Some(1)
        } else if (0.0..2.0).contains(&upper_g) {
            Some(2)
        } else {
            None
        }
    };
    let mut acc: [Vec<(f64, f64, f64)>; 3] = Default::default();
    for cycle in &log.cycles {
        let Some(band) = band_of(cycle.drag_upper_at_start * 1e3) else { continue };
        let m = compute_metrics_slice(&log, &scenario, cycle.target, cycle.row_start, cycle.row_end);
        acc[band].push((m.mean_ancillary_input, m.mean_tracking_error_deg, m.max_speed));
    }
    let mean = |v: &Vec<(f64, f64, f64)>, i: usize| -> f64 {
        v.iter().map(|t| [t.0, t.1, t.2][i]).sum::<f64>() / v.len().max(1) as f64
    };
    let populated: Vec<usize> = (0..3).filter(|&b| !acc[b].is_empty()).collect();
    let mut pass = populated.len() == 3;
    let mut rows = String::new();
    for b in 0..3 {
        rows.push_str(&format!(
            " band{}: n={} anc={:.3} err={:.3} vmax={:.2};",
            b,
            acc[b].len(),
            mean(&acc[b], 0),
            mean(&acc[b], 1),
            mean(&acc[b], 2)
        ));
    }
    for w in populated.windows(2) {
        let (hi, lo) = (w[0], w[1]);
        pass &= mean(&acc[lo], 0) <= mean(&acc[hi], 0) + 1e-12;
        pass &= mean(&acc[lo], 1) <= mean(&acc[hi], 1) + 1e-12;
        pass &= mean(&acc[lo], 2) >= mean(&acc[hi], 2) - 1e-12;
    }
    let details = format!(
        "cycles binned by published drag bound;{rows} ancillary/tracking non-increasing and \
         max speed non-decreasing band-to-band"
    );
    assert!(verdict("criterion 6 (adaptation trend)", pass, &details));
}

// ---------------------------------------------------------------------
// Criterion 7 — hardware-preset ordering of final drag bounds.
// ---------------------------------------------------------------------

#[test]
fn criterion_7_preset_ordering() {
    let mut jobs = Vec::new();
    for preset in ["none", "plate", "scoop"] {
        // Hardware-comparison variant: identical narrow priors on every
        // configuration, finer identification bound and quantization.
        let mut cfg = Config::for_scenario("adapt").unwrap();
        cfg.plant.preset = preset.into();
        cfg.smid.drag_lo = 0.0;
        cfg.smid.drag_hi = 2.0e-3;
        cfg.scenario.drag_nominal = 1.0e-3;
        cfg.scenario.drag_error = 1.0e-3;
        cfg.smid.d_id = 14.0;
        cfg.plant.measurement_noise = 4.0e-6;
        for seed in 0..3u64 {
            jobs.push((preset, RunJob { config: cfg.clone(), controller: ControllerKind::Adtmpc, seed: 500 + seed }));
        }
    }
    let results = run_batch(&jobs.iter().map(|(_, j)| j.clone()).collect::<Vec<_>>());
    let mut finals = std::collections::BTreeMap::<&str, Vec<f64>>::new();
    for ((preset, _), result) in jobs.iter().zip(results.iter()) {
        let log = result.as_ref().expect("adaptation run");
        let (_, hi) = log.boxes.last().unwrap().bounds.drag_interval();
        finals.entry(preset).or_default().push(hi);
    }
    let mean = |name: &str| -> f64 {
        let v = &finals[name];
        v.iter().sum::<f64>() / v.len() as f64
    };
    let (none, plate, scoop) = (mean("none"), mean("plate"), mean("scoop"));
    let pass = none < plate && plate < scoop;
    let details = format!(
        "final mean drag upper bounds (3 seeds each): none {:.3} < plate {:.3} < scoop {:.3} g m^2: {pass}",
        none * 1e3,
        plate * 1e3,
        scoop * 1e3
    );
    assert!(verdict("criterion 7 (preset ordering)", pass, &details));
}

// ---------------------------------------------------------------------
// Criterion 8 — solver certification against independent oracles.
// ---------------------------------------------------------------------

struct Lcg(u64);

impl Lcg {
    fn next_f64(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    fn index(&mut self, n: usize) -> usize {
        (self.next_f64() * n as f64) as usize % n
    }
}

/// Brute-force vertex enumeration over the row system `G x <= h`
/// (bounds already folded in): minimal objective over feasible vertices.
fn vertex_enumeration_min(cost: &DVector<f64>, g: &DMatrix<f64>, h: &DVector<f64>) -> Option<f64> {
    let n = cost.len();
    let m = g.nrows();
    let mut best: Option<f64> = None;
    let mut combo: Vec<usize> = (0..n).collect();
    loop {
        // Solve the n active rows as equalities.
        let mut a = DMatrix::zeros(n, n);
        let mut b = DVector::zeros(n);
        for (r, &row) in combo.iter().enumerate() {
            for c in 0..n {
                a[(r, c)] = g[(row, c)];
            }
            b[r] = h[row];
        }
        if let Some(x) = a.lu().solve(&b) {
            let feasible = (0..m).all(|r| g.row(r).transpose().dot(&x) <= h[r] + 1e-8);
            if feasible {
                let obj = cost.dot(&x);
                best = Some(best.map_or(obj, |b: f64| b.min(obj)));
            }
        }
        // Next combination.
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if combo[i] != i + m - n {
                combo[i] += 1;
                for j in i + 1..n {
                    combo[j] = combo[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Accelerated projected gradient on the dual of a strictly convex,
/// strictly feasible inequality QP; returns the primal optimal value
/// through strong duality.
fn dual_pgd_objective(qp: &QuadraticProgram, iterations: usize) -> f64 {
    let h_inv = qp.hessian.clone().cholesky().expect("PD hessian").inverse();
    let g = &qp.ineq_mat;
    let m = g.nrows();
    let big_m = g * &h_inv * g.transpose();
    let lin = g * &h_inv * &qp.linear + &qp.ineq_rhs;
    // Lipschitz constant by power iteration.
    let mut v = DVector::from_element(m, 1.0);
    for _ in 0..60 {
        v = &big_m * v;
        let norm = v.norm();
        if norm > 0.0 {
            v /= norm;
        }
    }
    let lip = (v.transpose() * &big_m * &v)[(0, 0)].max(1e-12);
    let step = 1.0 / lip;

    let mut lambda = DVector::zeros(m);
    let mut y = lambda.clone();
    let mut t_acc = 1.0f64;
    for _ in 0..iterations {
        let grad = &big_m * &y + &lin;
        let mut next = &y - step * grad;
        next.iter_mut().for_each(|z| *z = z.max(0.0));
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_acc * t_acc).sqrt());
        y = &next + ((t_acc - 1.0) / t_next) * (&next - &lambda);
        lambda = next;
        t_acc = t_next;
    }
    let f = 0.5 * (lambda.transpose() * &big_m * &lambda)[(0, 0)] + lambda.dot(&lin);
    let const_term = 0.5 * (qp.linear.transpose() * &h_inv * &qp.linear)[(0, 0)];
    -f - const_term
}

#[test]
fn criterion_8_solver_certification() {
    let mut rng = Lcg(0xFEED_5EED);
    let mut lp_worst_gap = 0.0f64;
    let mut kkt_worst = 0.0f64;
    let mut checked = 0usize;

    // 250 random LPs against vertex enumeration, sized so the
    // brute-force oracle stays tractable: wide problems stay low
    // dimensional, six-variable ones get fewer rows.
    for k in 0..250 {
        let n = if k % 5 == 4 { 5 + rng.index(2) } else { 2 + rng.index(3) };
        let m_extra = if n >= 5 { 2 + rng.index(5) } else { 4 + rng.index(12) };
        let mut g = DMatrix::zeros(m_extra + 2 * n, n);
        let mut h = DVector::zeros(m_extra + 2 * n);
        for r in 0..m_extra {
            for c in 0..n {
                g[(r, c)] = rng.range(-1.0, 1.0);
            }
            h[r] = rng.range(0.2, 2.0);
        }
        for j in 0..n {
            g[(m_extra + 2 * j, j)] = 1.0;
            h[m_extra + 2 * j] = rng.range(0.5, 3.0);
            g[(m_extra + 2 * j + 1, j)] = -1.0;
            h[m_extra + 2 * j + 1] = rng.range(0.5, 3.0);
        }
        let cost = DVector::from_fn(n, |_, _| rng.range(-1.0, 1.0));
        let lp = LinearProgram {
            cost: cost.clone(),
            ineq_mat: g.clone(),
            ineq_rhs: h.clone(),
            lower: DVector::from_element(n, f64::NEG_INFINITY),
            upper: DVector::from_element(n, f64::INFINITY),
        };
        let sol = solve_lp(&lp).expect("well-formed LP");
        assert_eq!(sol.status, SolveStatus::Optimal, "origin-feasible LP must solve");
        let kkt = lp_kkt_residuals(&lp, &sol.x, &sol.ineq_duals);
        kkt_worst = kkt_worst.max(kkt.worst());
        let oracle = vertex_enumeration_min(&cost, &g, &h).expect("bounded LP has a vertex");
        lp_worst_gap = lp_worst_gap.max((sol.objective - oracle).abs());
        checked += 1;
    }

    // 250 random strictly feasible QPs against the dual oracle.
    let mut qp_worst_rel = 0.0f64;
    for k in 0..250 {
        let n = 2 + rng.index(19).min(18); // up to 20
        let m = 1 + rng.index(2 * n).min(40 - 1);
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = rng.range(-1.0, 1.0);
            }
        }
        let hess = &a * a.transpose() + DMatrix::identity(n, n) * rng.range(0.3, 1.5);
        let linear = DVector::from_fn(n, |_, _| rng.range(-2.0, 2.0));
        let x0 = DVector::from_fn(n, |_, _| rng.range(-1.0, 1.0));
        let mut g = DMatrix::zeros(m, n);
        for r in 0..m {
            for c in 0..n {
                g[(r, c)] = rng.range(-1.0, 1.0);
            }
        }
        let margin = DVector::from_fn(m, |_, _| rng.range(0.1, 1.0));
        let h = &g * &x0 + margin;
        let qp = QuadraticProgram {
            hessian: hess,
            linear,
            eq_mat: DMatrix::zeros(0, n),
            eq_rhs: DVector::zeros(0),
            ineq_mat: g,
            ineq_rhs: h,
        };
        qp.validate().expect("generated QP valid");
        let sol = solve_qp(&qp).expect("well-formed QP");
        assert_eq!(sol.status, SolveStatus::Optimal, "strictly feasible QP {k}");
        let kkt = qp_kkt_residuals(&qp, &sol.x, &sol.eq_duals, &sol.ineq_duals);
        kkt_worst = kkt_worst.max(kkt.worst());
        let oracle = dual_pgd_objective(&qp, 6000);
        let rel = (sol.objective - oracle).abs() / sol.objective.abs().max(1.0);
        qp_worst_rel = qp_worst_rel.max(rel);
        checked += 1;
    }

    let pass = checked == 500 && kkt_worst <= 1e-7 && lp_worst_gap <= 1e-8 && qp_worst_rel <= 1e-5;
    let details = format!(
        "{checked} problems; worst KKT residual {kkt_worst:.2e} (tol 1e-7); \
         LP-vs-vertex-enumeration gap {lp_worst_gap:.2e} (tol 1e-8); \
         QP-vs-dual-gradient relative gap {qp_worst_rel:.2e} (tol 1e-5)"
    );
    assert!(verdict("criterion 8 (solver certification)", pass, &details));
}

// ---------------------------------------------------------------------
// Criterion 9 — linearization Jacobians vs central differences.
// ---------------------------------------------------------------------

#[test]
fn criterion_9_jacobian_check() {
    let cfg = Config::for_scenario("a").unwrap();
    let sc = Scenario::build(&cfg, ControllerKind::Dtmpc, 0).unwrap();
    let mut ocp = sc.ocp.clone();
    ocp.target = Target::rest_at(5.0 * std::f64::consts::PI, &ocp.nominal);
    let ic = InitialCondition {
        theta: 0.2,
        theta_dot: 0.5,
        phi: 0.5,
        omega: 0.03,
        u_prev: Some(0.2),
        alpha_prev: Some(50.0),
    };
    let tr = Transcription::new(ocp.clone(), TubeMode::Dynamic, ic);
    let nv = tr.num_vars();
    let n = ocp.horizon;

    let mut rng = Lcg(0x4A43_0B1A);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let mut z = DVector::zeros(nv);
        for k in 0..=n {
            z[tr.i_theta(k)] = rng.range(-0.5, 16.0);
            z[tr.i_w(k)] = rng.range(-12.0, 12.0);
            z[tr.i_phi(k)] = rng.range(0.15, 0.9);
            z[tr.i_omega(k)] = rng.range(0.01, 0.19);
        }
        for k in 0..n {
            z[tr.i_u(k)] = rng.range(-1.5, 1.5);
            z[tr.i_alpha(k)] = rng.range(45.0, 135.0);
        }
        let sub = tr.build_subproblem(&z, 0.5);
        for row in 0..tr.num_eq_rows() {
            for col in 0..nv {
                let jac = sub.qp.eq_mat[(row, col)];
                let hstep = 1e-6 * (1.0 + z[col].abs());
                let mut zp = z.clone();
                zp[col] += hstep;
                let mut zm = z.clone();
                zm[col] -= hstep;
                let fd = (tr.eq_value(row, &zp) - tr.eq_value(row, &zm)) / (2.0 * hstep);
                let scale = jac.abs().max(fd.abs()).max(1e-6);
                worst = worst.max((jac - fd).abs() / scale);
            }
        }
        for (row, kind) in sub.ineq_kinds.iter().enumerate() {
            for col in 0..nv {
                let jac = sub.qp.ineq_mat[(row, col)];
                let hstep = 1e-6 * (1.0 + z[col].abs());
                let mut zp = z.clone();
                zp[col] += hstep;
                let mut zm = z.clone();
                zm[col] -= hstep;
                let fd =
                    (tr.ineq_true_value(*kind, &zp) - tr.ineq_true_value(*kind, &zm)) / (2.0 * hstep);
                let scale = jac.abs().max(fd.abs()).max(1e-6);
                worst = worst.max((jac - fd).abs() / scale);
            }
        }
    }
    let pass = worst <= 1e-4;
    let details =
        format!("20 random linearization points, worst relative Jacobian gap {worst:.2e} (tol 1e-4)");
    assert!(verdict("criterion 9 (linearization Jacobians)", pass, &details));
}

// ---------------------------------------------------------------------
// Criterion 10 — closed-form pins.
// ---------------------------------------------------------------------

#[test]
fn criterion_10_closed_form_pins() {
    // Steady boundary layer at the reference drives.
    let phi_ss: f64 = (20.0 + 20.0 + 0.1) / 40.0;
    let phi_ok = (phi_ss - 1.0025).abs() / 1.0025 <= 1e-6;
    assert_relative_eq!(
        tube_mpc::ancillary::phi_derivative(phi_ss, 40.0, 20.0, 20.0, 0.1),
        0.0,
        epsilon = 1e-12
    );

    // Fixed tube at the 7.5 degree ceiling.
    let cfg = Config::for_scenario("b").unwrap();
    let sc = Scenario::build(&cfg, ControllerKind::Dtmpc, 0).unwrap();
    let tube = tmpc_fixed_tube(&sc.ocp, 20.0).unwrap();
    let alpha_ok = (tube.alpha - 76.5853565).abs() / 76.5853565 <= 1e-6;

    let pass = phi_ok && alpha_ok;
    let details = format!(
        "phi_ss = {phi_ss:.7} rad/s (pin 1.0025, rel tol 1e-6); \
         fixed-tube alpha = {:.7} 1/s (pin 76.5853565, rel tol 1e-6)",
        tube.alpha
    );
    assert!(verdict("criterion 10 (closed-form pins)", pass, &details));
}

// ---------------------------------------------------------------------
// Auxiliary: single-trial smoke comparison stays under a minute.
// ---------------------------------------------------------------------

#[test]
fn smoke_single_trial_comparison_under_60s() {
    let start = std::time::Instant::now();
    let cfg = Config::for_scenario("b").unwrap();
    let out = run_comparison(&cfg, 1, 9999).expect("smoke comparison");
    let elapsed = start.elapsed();
    let pass = elapsed.as_secs_f64() < 60.0 && out.logs.len() == 1;
    let details = format!("one paired trial in {elapsed:?} (budget 60 s)");
    assert!(verdict("smoke (single-trial comparison)", pass, &details));
}

// Keeping the unused-import lints honest for conditional compilation.
#[allow(dead_code)]
fn _touch(log: &RunLog, sc: &Scenario) -> f64 {
    compute_metrics(log, sc, 0.0).control_effort + mpc::resting_alpha(&sc.ocp, 0.0)
}
