//! Closed-loop executive, scenarios, metrics, configuration, logging.
//!
//! Every run is a pure function of `(Config, ControllerKind, seed)`.
//! Batch entry points fan independent runs out over rayon when the
//! `parallel` feature (default) is on; `run_batch_serial` is always
//! available and produces identical results, since runs share no
//! state.

pub mod config;
pub mod logs;
pub mod metrics;
pub mod scenario;
pub mod scheduler;

pub use config::{Config, ConfigError};
pub use logs::{BoxRecord, CycleRecord, LogRow, RunLog};
pub use metrics::{compute_metrics, compute_metrics_slice, Comparison, Metrics};
pub use scenario::{ControllerKind, Scenario, ScenarioKind};
pub use scheduler::{run_closed_loop, RunError};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Run(#[from] RunError),
}

/// One unit of batch work.
#[derive(Debug, Clone)]
pub struct RunJob {
    pub config: Config,
    pub controller: ControllerKind,
    pub seed: u64,
}

impl RunJob {
    pub fn execute(&self) -> Result<RunLog, HarnessError> {
        let scenario = Scenario::build(&self.config, self.controller, self.seed)?;
        Ok(run_closed_loop(&scenario)?)
    }
}

/// Sequential batch execution; the reference semantics.
pub fn run_batch_serial(jobs: &[RunJob]) -> Vec<Result<RunLog, HarnessError>> {
    jobs.iter().map(RunJob::execute).collect()
}

/// Batch execution, data-parallel across runs when the `parallel`
/// feature is enabled. Results are positionally identical to
/// [`run_batch_serial`]; each run owns its seeded streams.
#[cfg(feature = "parallel")]
pub fn run_batch(jobs: &[RunJob]) -> Vec<Result<RunLog, HarnessError>> {
    use rayon::prelude::*;
    jobs.par_iter().map(RunJob::execute).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn run_batch(jobs: &[RunJob]) -> Vec<Result<RunLog, HarnessError>> {
    run_batch_serial(jobs)
}

/// Paired fixed-tube vs dynamic-tube comparison over common seeds.
pub struct ComparisonOutcome {
    pub comparison: Comparison,
    pub logs: Vec<(RunLog, RunLog)>,
}

pub fn run_comparison(
    config: &Config,
    trials: usize,
    base_seed: u64,
) -> Result<ComparisonOutcome, HarnessError> {
    assert!(trials >= 1, "at least one trial");
    let mut jobs = Vec::with_capacity(trials * 2);
    for i in 0..trials {
        let seed = base_seed.wrapping_add(i as u64);
        jobs.push(RunJob { config: config.clone(), controller: ControllerKind::Tmpc, seed });
        jobs.push(RunJob { config: config.clone(), controller: ControllerKind::Dtmpc, seed });
    }
    let results = run_batch(&jobs);

    let mut comparison = Comparison::default();
    let mut logs = Vec::with_capacity(trials);
    let target = *config.scenario.setpoints.last().expect("setpoint");
    for (pair, seed_idx) in results.chunks(2).zip(0..) {
        let seed = base_seed.wrapping_add(seed_idx as u64);
        let tmpc_log = pair[0].as_ref().map_err(|e| clone_err(e, seed))?;
        let dtmpc_log = pair[1].as_ref().map_err(|e| clone_err(e, seed))?;
        let sc_t = Scenario::build(config, ControllerKind::Tmpc, seed)?;
        let sc_d = Scenario::build(config, ControllerKind::Dtmpc, seed)?;
        comparison.push(
            compute_metrics(tmpc_log, &sc_t, target),
            compute_metrics(dtmpc_log, &sc_d, target),
        );
        logs.push((tmpc_log.clone(), dtmpc_log.clone()));
    }
    Ok(ComparisonOutcome { comparison, logs })
}

fn clone_err(e: &HarnessError, seed: u64) -> HarnessError {
    HarnessError::Config(ConfigError::Invalid(format!("run with seed {seed} failed: {e}")))
}

/// Adaptation run: the adaptive controller cycling between setpoints
/// until identification goes quiet.
pub fn run_adaptation(config: &Config, seed: u64) -> Result<RunLog, HarnessError> {
    let scenario = Scenario::build(config, ControllerKind::Adtmpc, seed)?;
    Ok(run_closed_loop(&scenario)?)
}


#[cfg(test)]
mod probes {
    use super::*;

    #[test]
    #[ignore]
    fn full_run_timing() {
        for kind in ["a", "b"] {
            let cfg = Config::for_scenario(kind).unwrap();
            for ctrl in [ControllerKind::Tmpc, ControllerKind::Dtmpc] {
                let t = std::time::Instant::now();
                let sc = Scenario::build(&cfg, ctrl, 0).unwrap();
                match run_closed_loop(&sc) {
                    Ok(log) => {
                        let target = *cfg.scenario.setpoints.last().unwrap();
                        let m = compute_metrics(&log, &sc, target);
                        eprintln!(
                            "{kind}/{ctrl}: wall={:?} sim={:.2}s steady={} falls={} effort={:.3} rise={:?} vmax={:.2} err={:.2}deg anc={:.3}",
                            t.elapsed(),
                            log.outcome.end_time,
                            log.outcome.reached_steady,
                            log.outcome.planner_fallbacks,
                            m.control_effort,
                            m.rise_time,
                            m.max_speed,
                            m.mean_tracking_error_deg,
                            m.mean_ancillary_input,
                        );
                    }
                    Err(e) => eprintln!("{kind}/{ctrl}: FAILED after {:?}: {e}", t.elapsed()),
                }
            }
        }
    }
}
