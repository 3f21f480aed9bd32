//! Robust trajectory tracking for an uncertain torque-driven pendulum.
//!
//! The crate couples three layers that run at different rates in a
//! deterministic simulation:
//!
//! * [`plant`] — the ground-truth pendulum with injectable bounded
//!   disturbances, integrated at the inner-loop rate (500 Hz).
//! * [`ancillary`] — a boundary-layer sliding controller that keeps the
//!   plant inside a robust control invariant tube around a planned
//!   trajectory, plus the tube ODEs and constraint-tightening algebra.
//! * [`mpc`] — trajectory optimizers: a fixed-tube planner (TMPC) and a
//!   dynamic-tube planner (DTMPC) that co-optimizes the tube geometry,
//!   both solved by sequential convex programming over [`convex`].
//! * [`smid`] — set-membership identification that shrinks guaranteed
//!   interval bounds on the physical parameters from closed-loop data
//!   (the adaptive variant, ADTMPC).
//! * [`harness`] — the multi-rate executive, scenarios, metrics,
//!   configuration and CSV logging; it backs the `tube-mpc` binary.
//!
//! All simulation state is value-typed and every run is a pure function
//! of its configuration and seed. Batch entry points in [`harness`]
//! fan seeds out with rayon when the `parallel` feature (default) is
//! enabled and fall back to a sequential loop otherwise.

pub mod ancillary;
pub mod convex;
pub mod harness;
pub mod mpc;
pub mod plant;
pub mod smid;

pub use harness::config::Config;
pub use harness::scenario::{ControllerKind, Scenario, ScenarioKind};
