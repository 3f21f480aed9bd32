//! Run records and CSV serialization.

use crate::smid::ParamBox;
use serde::{Deserialize, Serialize};
use std::io::{self, Write};

/// One inner-loop record. The CSV export carries the documented ten
/// columns; the reference state is kept alongside for metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub t: f64,
    pub theta: f64,
    pub theta_dot: f64,
    pub u: f64,
    pub u_star: f64,
    pub s: f64,
    pub phi: f64,
    pub omega: f64,
    pub alpha: f64,
    pub d: f64,
    pub theta_ref: f64,
    pub theta_dot_ref: f64,
}

impl LogRow {
    pub fn tracking_error(&self) -> f64 {
        (self.theta - self.theta_ref).abs()
    }

    pub fn tracking_error_deg(&self) -> f64 {
        self.tracking_error().to_degrees()
    }
}

/// One planner completion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveRecord {
    pub t_request: f64,
    pub t_apply: f64,
    pub ok: bool,
    pub scp_iterations: usize,
    pub qp_activations: usize,
    pub violation: f64,
}

/// One published identification box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxRecord {
    pub t: f64,
    pub bounds: ParamBox,
}

/// One completed setpoint-to-setpoint leg of an adaptation run, tagged
/// with the published drag upper bound at its start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub start_t: f64,
    pub end_t: f64,
    pub target: f64,
    pub drag_upper_at_start: f64,
    pub row_start: usize,
    pub row_end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RunOutcome {
    pub end_time: f64,
    pub reached_steady: bool,
    pub aborted: Option<String>,
    pub planner_fallbacks: usize,
    pub smid_rejected_batches: usize,
}

/// Complete, deterministic record of one closed-loop run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RunLog {
    pub rows: Vec<LogRow>,
    pub solves: Vec<SolveRecord>,
    pub boxes: Vec<BoxRecord>,
    pub cycles: Vec<CycleRecord>,
    pub outcome: RunOutcome,
}

impl RunLog {
    pub fn duration(&self) -> f64 {
        self.outcome.end_time
    }

    /// Inner-loop records as CSV with the documented column order.
    pub fn run_csv(&self) -> String {
        let mut out = String::from("t,theta,theta_dot,u,u_star,s,phi,omega,alpha,d\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.t, r.theta, r.theta_dot, r.u, r.u_star, r.s, r.phi, r.omega, r.alpha, r.d
            ));
        }
        out
    }

    /// Identification-box history as CSV with the documented columns.
    pub fn box_csv(&self) -> String {
        let mut out = String::from("t,I_lo,I_hi,L_lo,L_hi,Cd_lo,Cd_hi,Lcm_lo,Lcm_hi\n");
        for b in &self.boxes {
            let p = &b.bounds;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                b.t, p.lo[0], p.hi[0], p.lo[1], p.hi[1], p.lo[2], p.hi[2], p.lo[3], p.hi[3]
            ));
        }
        out
    }

    /// Planner records (diagnostic extra, stable columns).
    pub fn solve_csv(&self) -> String {
        let mut out = String::from("t_request,t_apply,ok,scp_iterations,qp_activations,violation\n");
        for s in &self.solves {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                s.t_request, s.t_apply, s.ok, s.scp_iterations, s.qp_activations, s.violation
            ));
        }
        out
    }

    pub fn write_dir(&self, dir: &std::path::Path) -> io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::File::create(dir.join("run.csv"))?.write_all(self.run_csv().as_bytes())?;
        if !self.boxes.is_empty() {
            std::fs::File::create(dir.join("boxes.csv"))?.write_all(self.box_csv().as_bytes())?;
        }
        std::fs::File::create(dir.join("solves.csv"))?.write_all(self.solve_csv().as_bytes())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_headers_match_documented_columns() {
        let log = RunLog::default();
        assert!(log.run_csv().starts_with("t,theta,theta_dot,u,u_star,s,phi,omega,alpha,d\n"));
        assert!(log
            .box_csv()
            .starts_with("t,I_lo,I_hi,L_lo,L_hi,Cd_lo,Cd_hi,Lcm_lo,Lcm_hi\n"));
    }
}
