//! Run metrics and controller comparisons.

use super::logs::RunLog;
use super::scenario::Scenario;
use serde::{Deserialize, Serialize};

/// Summary numbers for one run (or one slice of a run).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Metrics {
    /// ∫u² dt, N²·s.
    pub control_effort: f64,
    /// First time the angle enters the tube-ceiling band around the
    /// target; absent when the setpoint is never reached.
    pub rise_time: Option<f64>,
    /// max |θ̇|, rad/s.
    pub max_speed: f64,
    /// mean |θ − θ*|, degrees.
    pub mean_tracking_error_deg: f64,
    /// mean |u − u*|, N.
    pub mean_ancillary_input: f64,
    /// Time to detected steady state, s.
    pub completion_time: Option<f64>,
}

/// Metrics over a row range `[start, end)` of the log.
pub fn compute_metrics_slice(
    log: &RunLog,
    scenario: &Scenario,
    target: f64,
    start: usize,
    end: usize,
) -> Metrics {
    let rows = &log.rows[start.min(log.rows.len())..end.min(log.rows.len())];
    let dt = scenario.inner_dt;
    let band = scenario.omega_max_at(target);
    let mut effort = 0.0;
    let mut max_speed = 0.0_f64;
    let mut err_sum = 0.0;
    let mut anc_sum = 0.0;
    let mut rise = None;
    for r in rows {
        effort += r.u * r.u * dt;
        max_speed = max_speed.max(r.theta_dot.abs());
        anc_sum += (r.u - r.u_star).abs();
        err_sum += r.tracking_error_deg();
        if rise.is_none() && (r.theta - target).abs() <= band {
            rise = Some(r.t - rows.first().map_or(0.0, |f| f.t));
        }
    }
    let err_mean = err_sum / rows.len().max(1) as f64;
    Metrics {
        control_effort: effort,
        rise_time: rise,
        max_speed,
        mean_tracking_error_deg: err_mean,
        mean_ancillary_input: anc_sum / rows.len().max(1) as f64,
        completion_time: None,
    }
}

/// Whole-run metrics; completion time comes from the outcome.
pub fn compute_metrics(log: &RunLog, scenario: &Scenario, target: f64) -> Metrics {
    let mut m = compute_metrics_slice(log, scenario, target, 0, log.rows.len());
    if log.outcome.reached_steady {
        m.completion_time = Some(log.outcome.end_time);
    }
    m
}

/// Paired comparison of two controllers over common seeds.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct Comparison {
    pub trials: Vec<(Metrics, Metrics)>,
    pub mean_a: Metrics,
    pub mean_b: Metrics,
}

impl Comparison {
    pub fn push(&mut self, a: Metrics, b: Metrics) {
        self.trials.push((a, b));
        self.refresh();
    }

    fn refresh(&mut self) {
        let n = self.trials.len() as f64;
        let sum = |f: &dyn Fn(&Metrics) -> f64, which: usize| -> f64 {
            self.trials
                .iter()
                .map(|(a, b)| f(if which == 0 { a } else { b }))
                .sum::<f64>()
                / n
        };
        for which in 0..2 {
            let m = Metrics {
                control_effort: sum(&|m| m.control_effort, which),
                rise_time: {
                    let vals: Vec<f64> = self
                        .trials
                        .iter()
                        .filter_map(|(a, b)| if which == 0 { a.rise_time } else { b.rise_time })
                        .collect();
                    (!vals.is_empty())
                        .then(|| vals.iter().sum::<f64>() / vals.len() as f64)
                },
                max_speed: sum(&|m| m.max_speed, which),
                mean_tracking_error_deg: sum(&|m| m.mean_tracking_error_deg, which),
                mean_ancillary_input: sum(&|m| m.mean_ancillary_input, which),
                completion_time: {
                    let vals: Vec<f64> = self
                        .trials
                        .iter()
                        .filter_map(
                            |(a, b)| if which == 0 { a.completion_time } else { b.completion_time },
                        )
                        .collect();
                    (!vals.is_empty())
                        .then(|| vals.iter().sum::<f64>() / vals.len() as f64)
                },
            };
            if which == 0 {
                self.mean_a = m;
            } else {
                self.mean_b = m;
            }
        }
    }

    /// Human-readable table in the style of the paired-controller
    /// comparison: absolute means plus reduction/increase percentages.
    pub fn table(&self, name_a: &str, name_b: &str) -> String {
        let (a, b) = (&self.mean_a, &self.mean_b);
        let pct_red = |x: f64, y: f64| if x != 0.0 { (1.0 - y / x) * 100.0 } else { 0.0 };
        let pct_inc = |x: f64, y: f64| if x != 0.0 { y / x * 100.0 } else { 0.0 };
        let mut out = String::new();
        out.push_str(&format!(
            "{:<22} {:>12} {:>12} {:>11} {:>11}\n",
            "Metric", name_a, name_b, "Reduction", "Increase"
        ));
        out.push_str(&format!(
            "{:<22} {:>12.4} {:>12.4} {:>10.1}% {:>11}\n",
            "Control Effort [N^2 s]",
            a.control_effort,
            b.control_effort,
            pct_red(a.control_effort, b.control_effort),
            "-"
        ));
        let rt = |m: &Metrics| m.rise_time.unwrap_or(f64::NAN);
        out.push_str(&format!(
            "{:<22} {:>12.3} {:>12.3} {:>10.1}% {:>11}\n",
            "Rise Time [s]",
            rt(a),
            rt(b),
            pct_red(rt(a), rt(b)),
            "-"
        ));
        out.push_str(&format!(
            "{:<22} {:>12.3} {:>12.3} {:>11} {:>10.0}%\n",
            "Maximum Speed [rad/s]",
            a.max_speed,
            b.max_speed,
            "-",
            pct_inc(a.max_speed, b.max_speed)
        ));
        out.push_str(&format!(
            "{:<22} {:>12.3} {:>12.3} {:>11} {:>10.0}%\n",
            "Tracking Error [deg]",
            a.mean_tracking_error_deg,
            b.mean_tracking_error_deg,
            "-",
            pct_inc(a.mean_tracking_error_deg, b.mean_tracking_error_deg)
        ));
        out
    }
}
