//! Scenario assembly: turning a configuration and a controller choice
//! into the concrete objects a closed-loop run needs.

use super::config::{Config, ConfigError};
use crate::ancillary::{ControllerGains, NominalParams, RegionEnvelope, UncertaintyModel};
use crate::mpc::{tmpc_fixed_tube, FixedTube, MpcError, OcpConfig, OmegaBand, OmegaMaxMap, Target};
use crate::plant::{DisturbanceRegion, DisturbanceSpec, PendulumParams};
use crate::smid::{ParamBox, SmidConfig};
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ControllerKind {
    Tmpc,
    Dtmpc,
    Adtmpc,
}

impl ControllerKind {
    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "tmpc" => Some(Self::Tmpc),
            "dtmpc" => Some(Self::Dtmpc),
            "adtmpc" => Some(Self::Adtmpc),
            _ => None,
        }
    }

    pub fn uses_smid(&self) -> bool {
        matches!(self, Self::Adtmpc)
    }

    pub fn uses_dynamic_tube(&self) -> bool {
        !matches!(self, Self::Tmpc)
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Tmpc => "tmpc",
            Self::Dtmpc => "dtmpc",
            Self::Adtmpc => "adtmpc",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioKind {
    RestrictedTube,
    RegionalDisturbance,
    AdaptationCycles,
    Custom,
}

impl ScenarioKind {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "restricted-tube" | "a" => Some(Self::RestrictedTube),
            "regional-disturbance" | "b" => Some(Self::RegionalDisturbance),
            "adaptation-cycles" | "adapt" => Some(Self::AdaptationCycles),
            "custom" => Some(Self::Custom),
            _ => None,
        }
    }
}

/// Everything a deterministic run needs, fully resolved.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub controller: ControllerKind,
    pub seed: u64,
    pub plant: PendulumParams,
    pub nominal: NominalParams,
    pub gains: ControllerGains,
    pub disturbance: DisturbanceSpec,
    pub ocp: OcpConfig,
    pub fixed_tube: Option<FixedTube>,
    pub setpoints: Vec<f64>,
    pub inner_dt: f64,
    pub smid_every: usize,
    pub planner_latency: f64,
    pub bootstrap_iterations: usize,
    pub smid: Option<SmidSetup>,
    pub measurement_noise: f64,
    pub steady_angle_tol: f64,
    pub steady_speed_tol: f64,
    pub steady_window: f64,
    pub max_time: f64,
    pub quiescence_window: f64,
}

#[derive(Debug, Clone)]
pub struct SmidSetup {
    pub cfg: SmidConfig,
    pub initial: ParamBox,
}

impl Scenario {
    /// Resolve a configuration for one controller and seed. The fixed
    /// tube is constructed here; if the anticipated uncertainty does
    /// not fit under the bandwidth ceiling, it is reduced to the
    /// largest feasible value and the planner inherits the implied
    /// speed budget.
    pub fn build(config: &Config, controller: ControllerKind, seed: u64) -> Result<Self, ConfigError> {
        config.validate()?;
        let plant = config.plant.params()?;
        let nominal = NominalParams::from_plant(&plant);
        let gains = config.gains.gains();
        let sc = &config.scenario;
        let kind = ScenarioKind::parse(&sc.kind)
            .ok_or_else(|| ConfigError::Invalid(format!("unknown scenario kind '{}'", sc.kind)))?;

        let disturbance = DisturbanceSpec {
            regions: sc
                .disturbance_bands
                .iter()
                .map(|b| DisturbanceRegion { lo: b.lo, hi: b.hi, scale: b.value })
                .collect(),
            region_bound: sc.region_bound,
            base_bound: sc.base_bound,
            resample_hz: sc.resample_hz,
            seed,
        };
        disturbance.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;

        // The dynamic planner anticipates the regional disturbance as a
        // state-dependent envelope; the fixed planner folds it into its
        // constant anticipated bound instead.
        let region = if controller.uses_dynamic_tube() {
            RegionEnvelope::from_disturbance(&disturbance, sc.envelope_widen, sc.envelope_ramp)
        } else {
            RegionEnvelope::none()
        };
        let model = UncertaintyModel {
            drag_nominal: sc.drag_nominal,
            drag_error: sc.drag_error,
            d_bound: sc.d_bound,
            inertia: nominal.inertia,
            region,
        };
        let omega_max = OmegaMaxMap {
            default_max: sc.omega_max,
            bands: sc
                .omega_bands
                .iter()
                .map(|b| OmegaBand { lo: b.lo, hi: b.hi, value: b.value })
                .collect(),
            widen: sc.omega_band_widen,
            ramp: sc.omega_band_ramp,
        };

        let mut ocp = OcpConfig {
            horizon: config.ocp.horizon,
            dt: config.ocp.dt,
            q: [config.ocp.q[0], 0.0, 0.0, config.ocp.q[1]],
            q_f: [config.ocp.q_f[0], 0.0, 0.0, config.ocp.q_f[1]],
            r: config.ocp.r,
            m_alpha: config.ocp.m_alpha,
            u_max: config.ocp.u_max,
            u_rate_max: config.ocp.u_rate_max,
            speed_max: config.ocp.speed_max,
            omega_max,
            gains,
            nominal,
            model,
            target: Target::rest_at(sc.setpoints[0], &nominal),
            scp: Default::default(),
        };
        ocp.scp.max_iterations = config.ocp.scp_iterations;

        let fixed_tube = if controller.uses_dynamic_tube() {
            None
        } else {
            Some(build_fixed_tube(&ocp, sc.delta_bar)?)
        };
        if controller.uses_dynamic_tube() {
            // keep cfg as assembled
        } else {
            // The fixed-tube planner never varies alpha; leave the OCP
            // untouched otherwise.
            ocp.model.region = RegionEnvelope::none();
        }

        let smid = controller.uses_smid().then(|| SmidSetup {
            cfg: SmidConfig {
                d_id: config.smid.d_id,
                batch_size: config.smid.batch_size,
                excitation_min_speed: config.smid.excitation_min_speed,
            },
            initial: ParamBox::around(
                nominal.inertia,
                nominal.lever,
                nominal.com_distance,
                config.smid.geometry_margin,
                config.smid.drag_lo,
                config.smid.drag_hi,
            ),
        });

        Ok(Self {
            kind,
            controller,
            seed,
            plant,
            nominal,
            gains,
            disturbance,
            ocp,
            fixed_tube,
            setpoints: sc.setpoints.clone(),
            inner_dt: 2e-3,
            smid_every: 10,
            planner_latency: config.ocp.planner_latency,
            bootstrap_iterations: config.ocp.bootstrap_iterations,
            smid,
            measurement_noise: config.plant.measurement_noise,
            steady_angle_tol: sc.steady_angle_tol_deg.to_radians(),
            steady_speed_tol: sc.steady_speed_tol,
            steady_window: sc.steady_window,
            max_time: sc.max_time,
            quiescence_window: sc.quiescence_window,
        })
    }

    /// Tube ceiling at the given angle (for rise-time bands and checks).
    pub fn omega_max_at(&self, theta: f64) -> f64 {
        self.ocp.omega_max.value(theta)
    }
}

/// Fixed-tube construction with the documented fallback: when the full
/// anticipated uncertainty needs more bandwidth than the ceiling
/// allows, shrink it to the feasible maximum and cap the planned speed
/// so the realized drag uncertainty stays inside the shrunk budget.
fn build_fixed_tube(ocp: &OcpConfig, delta_bar: f64) -> Result<FixedTube, ConfigError> {
    let lambda = ocp.gains.lambda;
    let (mut tube, delta_used) = match tmpc_fixed_tube(ocp, delta_bar) {
        Ok(t) => (t, delta_bar),
        Err(MpcError::TubeTooTight { .. }) => {
            let omega = ocp.omega_max.global_min();
            let feasible =
                ocp.gains.alpha_max * lambda * omega - ocp.model.d_bound - ocp.gains.eta;
            if feasible <= 0.0 {
                return Err(ConfigError::Invalid(
                    "fixed tube infeasible even with zero anticipated uncertainty".into(),
                ));
            }
            let t = tmpc_fixed_tube(ocp, feasible)
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            (t, feasible)
        }
        Err(e) => return Err(ConfigError::Invalid(e.to_string())),
    };
    // Reachable-speed budget implied by the anticipated drag error:
    // Δ(θ̇) = (C̃_d/I)θ̇² must stay below the anticipated bound.
    if ocp.model.drag_error > 0.0 {
        let reach = (delta_used * ocp.model.inertia / ocp.model.drag_error).sqrt();
        let err = tube.phi + lambda * tube.omega;
        let cap = reach - err;
        if cap <= 0.0 {
            return Err(ConfigError::Invalid(
                "fixed-tube speed budget collapsed; anticipated uncertainty too small".into(),
            ));
        }
        tube.planned_speed_cap = Some(cap);
    }
    Ok(tube)
}
