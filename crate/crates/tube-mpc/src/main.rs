//! Command-line front end: single runs, paired comparisons, adaptation
//! experiments and seed sweeps over the simulated pendulum.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use tube_mpc::harness::{
    compute_metrics, run_adaptation, run_batch, run_closed_loop, run_comparison, Config,
    ControllerKind, RunJob, Scenario,
};

#[derive(Parser)]
#[command(name = "tube-mpc", version, about = "Tube MPC pendulum simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Scenario kind: restricted-tube (a), regional-disturbance (b),
    /// adaptation-cycles (adapt), or custom.
    #[arg(long, default_value = "regional-disturbance")]
    scenario: String,
    /// Plant preset: none, plate, scoop.
    #[arg(long)]
    preset: Option<String>,
    /// Base seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for CSV logs.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional TOML configuration file; CLI flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario with one controller.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        /// Controller: tmpc, dtmpc or adtmpc.
        #[arg(long, default_value = "dtmpc")]
        controller: String,
    },
    /// Paired TMPC-vs-DTMPC comparison over identical seeds.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 10)]
        trials: usize,
    },
    /// Adaptation experiment (ADTMPC cycling between setpoints).
    Adapt {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Seed batch of one controller on one scenario.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value = "dtmpc")]
        controller: String,
        #[arg(long, default_value_t = 10)]
        trials: usize,
    },
}

fn load_config(common: &CommonArgs, default_scenario: &str) -> Result<Config> {
    let scenario = if common.scenario == "regional-disturbance" && default_scenario != "regional-disturbance" {
        default_scenario
    } else {
        common.scenario.as_str()
    };
    let mut cfg = match &common.config {
        Some(path) => Config::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => Config::for_scenario(scenario)
            .with_context(|| format!("scenario '{scenario}'"))?,
    };
    if let Some(preset) = &common.preset {
        cfg.plant.preset = preset.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_controller(name: &str) -> Result<ControllerKind> {
    match ControllerKind::parse(name) {
        Some(c) => Ok(c),
        None => bail!("unknown controller '{name}' (expected tmpc, dtmpc or adtmpc)"),
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { common, controller } => {
            let cfg = load_config(&common, "regional-disturbance")?;
            let controller = parse_controller(&controller)?;
            let scenario = Scenario::build(&cfg, controller, common.seed)?;
            let log = run_closed_loop(&scenario)?;
            let target = *cfg.scenario.setpoints.last().unwrap();
            let metrics = compute_metrics(&log, &scenario, target);
            println!(
                "{} on {}: {:.2} s simulated, steady = {}",
                controller, cfg.scenario.kind, log.outcome.end_time, log.outcome.reached_steady
            );
            println!(
                "  effort {:.4} N^2 s | rise {} | max speed {:.2} rad/s | tracking {:.3} deg | ancillary {:.4} N",
                metrics.control_effort,
                metrics
                    .rise_time
                    .map(|r| format!("{r:.3} s"))
                    .unwrap_or_else(|| "not reached".into()),
                metrics.max_speed,
                metrics.mean_tracking_error_deg,
                metrics.mean_ancillary_input,
            );
            if let Some(dir) = common.out {
                let run_dir =
                    dir.join(format!("run_{}_{}_{:04}", cfg.scenario.kind, controller, common.seed));
                log.write_dir(&run_dir)?;
                println!("  logs in {}", run_dir.display());
            }
        }
        Command::Compare { common, trials } => {
            let cfg = load_config(&common, "regional-disturbance")?;
            let out = run_comparison(&cfg, trials, common.seed)?;
            println!("scenario {} averaged over {trials} trials:", cfg.scenario.kind);
            print!("{}", out.comparison.table("TMPC", "DTMPC"));
            if let Some(dir) = common.out {
                for (i, (tm, dt)) in out.logs.iter().enumerate() {
                    tm.write_dir(&dir.join(format!("trial_{i:03}_tmpc")))?;
                    dt.write_dir(&dir.join(format!("trial_{i:03}_dtmpc")))?;
                }
                println!("logs in {}", dir.display());
            }
        }
        Command::Adapt { common } => {
            let cfg = load_config(&common, "adaptation-cycles")?;
            let log = run_adaptation(&cfg, common.seed)?;
            println!(
                "adaptation: {:.1} s simulated, {} cycles, {} published boxes",
                log.outcome.end_time,
                log.cycles.len(),
                log.boxes.len().saturating_sub(1),
            );
            if let Some(b) = log.boxes.last() {
                let (lo, hi) = b.bounds.drag_interval();
                println!(
                    "  final drag interval [{:.3}, {:.3}] g m^2 (width {:.3})",
                    lo * 1e3,
                    hi * 1e3,
                    (hi - lo) * 1e3
                );
            }
            for (i, c) in log.cycles.iter().enumerate() {
                println!(
                    "  cycle {i}: {:.2} -> {:.2} s, target {:.2} rad, drag bound {:.2} g m^2",
                    c.start_t,
                    c.end_t,
                    c.target,
                    c.drag_upper_at_start * 1e3
                );
            }
            if let Some(dir) = common.out {
                let run_dir = dir.join(format!("adapt_{:04}", common.seed));
                log.write_dir(&run_dir)?;
                println!("  logs in {}", run_dir.display());
            }
        }
        Command::Sweep { common, controller, trials } => {
            let cfg = load_config(&common, "regional-disturbance")?;
            let controller = parse_controller(&controller)?;
            let jobs: Vec<RunJob> = (0..trials)
                .map(|i| RunJob {
                    config: cfg.clone(),
                    controller,
                    seed: common.seed.wrapping_add(i as u64),
                })
                .collect();
            let results = run_batch(&jobs);
            println!("seed sweep: {controller} on {}, {trials} trials", cfg.scenario.kind);
            let mut ok = 0usize;
            for (job, res) in jobs.iter().zip(results.iter()) {
                match res {
                    Ok(log) => {
                        ok += 1;
                        let scenario = Scenario::build(&cfg, controller, job.seed)?;
                        let target = *cfg.scenario.setpoints.last().unwrap();
                        let m = compute_metrics(log, &scenario, target);
                        println!(
                            "  seed {:>4}: effort {:.4}, max speed {:.2}, tracking {:.3} deg{}",
                            job.seed,
                            m.control_effort,
                            m.max_speed,
                            m.mean_tracking_error_deg,
                            if log.outcome.reached_steady { "" } else { " (no steady state)" }
                        );
                        if let Some(dir) = &common.out {
                            log.write_dir(&dir.join(format!("sweep_{controller}_{:04}", job.seed)))?;
                        }
                    }
                    Err(e) => println!("  seed {:>4}: failed: {e}", job.seed),
                }
            }
            println!("{ok}/{trials} runs completed");
        }
    }
    Ok(())
}
