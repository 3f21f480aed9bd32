//! Run configuration.
//!
//! The file format is a TOML document with `[plant]`, `[gains]`,
//! `[ocp]`, `[scenario]` and `[smid]` sections; every field has a
//! default, so a file only states overrides. Defaults carry the
//! reference experiment table: N = 45, Δt = 0.010 s, D = 20 1/s²,
//! λ = 4, η = 0.1, α ∈ [40, 140], Δα_max = 300, u_max = 2 N,
//! Δu_max = 4.5 N/s, θ̇_max = 15 rad/s, Q = diag(10, 0.1), R = 1,
//! M = 0.01.

use crate::ancillary::ControllerGains;
use crate::plant::PendulumParams;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantSection {
    /// Hardware preset: "none", "plate" or "scoop".
    pub preset: String,
    /// Optional overrides of the preset values.
    pub inertia: Option<f64>,
    pub lever: Option<f64>,
    pub com_distance: Option<f64>,
    pub mass: Option<f64>,
    pub gravity: Option<f64>,
    pub drag_true: Option<f64>,
    /// Uniform bound on the angle measurement noise, rad (0 = off).
    pub measurement_noise: f64,
}

impl Default for PlantSection {
    fn default() -> Self {
        Self {
            preset: "plate".into(),
            inertia: None,
            lever: None,
            com_distance: None,
            mass: None,
            gravity: None,
            drag_true: None,
            measurement_noise: 0.0,
        }
    }
}

impl PlantSection {
    pub fn params(&self) -> Result<PendulumParams, ConfigError> {
        let mut p = PendulumParams::preset(&self.preset)
            .ok_or_else(|| ConfigError::Invalid(format!("unknown preset '{}'", self.preset)))?;
        if let Some(v) = self.inertia {
            p.inertia = v;
        }
        if let Some(v) = self.lever {
            p.lever = v;
        }
        if let Some(v) = self.com_distance {
            p.com_distance = v;
        }
        if let Some(v) = self.mass {
            p.mass = v;
        }
        if let Some(v) = self.gravity {
            p.gravity = v;
        }
        if let Some(v) = self.drag_true {
            p.drag_true = v;
        }
        p.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainsSection {
    pub lambda: f64,
    pub eta: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub alpha_rate_max: f64,
}

impl Default for GainsSection {
    fn default() -> Self {
        Self { lambda: 4.0, eta: 0.1, alpha_min: 40.0, alpha_max: 140.0, alpha_rate_max: 300.0 }
    }
}

impl GainsSection {
    pub fn gains(&self) -> ControllerGains {
        ControllerGains {
            lambda: self.lambda,
            eta: self.eta,
            alpha_min: self.alpha_min,
            alpha_max: self.alpha_max,
            alpha_rate_max: self.alpha_rate_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OcpSection {
    pub horizon: usize,
    pub dt: f64,
    /// Diagonal state weights (θ, θ̇).
    pub q: [f64; 2],
    pub q_f: [f64; 2],
    pub r: f64,
    pub m_alpha: f64,
    pub u_max: f64,
    pub u_rate_max: f64,
    pub speed_max: f64,
    /// Simulated planner latency, s (also the replanning period).
    pub planner_latency: f64,
    /// Iteration budget for the synchronous bootstrap solve.
    pub bootstrap_iterations: usize,
    /// Iteration budget for runtime (latency-bound) solves.
    pub scp_iterations: usize,
}

impl Default for OcpSection {
    fn default() -> Self {
        Self {
            horizon: 45,
            dt: 0.010,
            q: [10.0, 0.1],
            q_f: [10.0, 0.1],
            r: 1.0,
            m_alpha: 0.01,
            u_max: 2.0,
            u_rate_max: 4.5,
            speed_max: 15.0,
            planner_latency: 0.1,
            bootstrap_iterations: 60,
            scp_iterations: 40,
        }
    }
}

/// One disturbance band of the scenario map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandEntry {
    pub lo: f64,
    pub hi: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    /// "restricted-tube", "regional-disturbance", "adaptation-cycles"
    /// or "custom".
    pub kind: String,
    /// Setpoints visited in order, rad. Adaptation runs cycle through
    /// them until identification goes quiet.
    pub setpoints: Vec<f64>,
    /// Default tube-radius ceiling, rad.
    pub omega_max: f64,
    /// Restricted bands of the ceiling (angle-dependent tube limits).
    pub omega_bands: Vec<BandEntry>,
    /// Exogenous regional disturbance: band scale factors on
    /// `region_bound`.
    pub disturbance_bands: Vec<BandEntry>,
    /// Peak regional disturbance magnitude, rad/s².
    pub region_bound: f64,
    /// Angle-independent background disturbance magnitude, rad/s².
    pub base_bound: f64,
    /// Disturbance refresh rate, Hz.
    pub resample_hz: f64,
    /// Controller-side exogenous bound D, rad/s².
    pub d_bound: f64,
    /// Nominal drag estimate, kg·m².
    pub drag_nominal: f64,
    /// Drag error bound, kg·m².
    pub drag_error: f64,
    /// Anticipated state-dependent uncertainty for the fixed tube.
    pub delta_bar: f64,
    /// Widening/ramp of the planner's regional envelope, rad.
    pub envelope_widen: f64,
    pub envelope_ramp: f64,
    /// Widening/ramp of restricted tube bands in the planner, rad.
    pub omega_band_widen: f64,
    pub omega_band_ramp: f64,
    /// Steady-state rule: |θ̃| below this (deg) and |θ̇| below the speed
    /// tolerance, sustained for the window, counts as arrived.
    pub steady_angle_tol_deg: f64,
    pub steady_speed_tol: f64,
    pub steady_window: f64,
    /// Wall-clock cap on simulated time, s.
    pub max_time: f64,
    /// Adaptation runs stop after this long without a published change.
    pub quiescence_window: f64,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            kind: "regional-disturbance".into(),
            setpoints: vec![5.0 * PI],
            omega_max: 7.5_f64.to_radians(),
            omega_bands: Vec::new(),
            disturbance_bands: vec![
                BandEntry { lo: 1.5 * PI, hi: 2.0 * PI, value: 0.5 },
                BandEntry { lo: 2.0 * PI, hi: 3.0 * PI, value: 1.0 },
                BandEntry { lo: 3.0 * PI, hi: 3.5 * PI, value: 0.5 },
            ],
            region_bound: 20.0,
            base_bound: 5.0,
            resample_hz: 500.0,
            d_bound: 20.0,
            drag_nominal: 1.0e-3,
            drag_error: 1.0e-3,
            delta_bar: 20.0,
            envelope_widen: 0.15,
            envelope_ramp: 0.15,
            omega_band_widen: 0.1,
            omega_band_ramp: 0.25,
            steady_angle_tol_deg: 1.0,
            steady_speed_tol: 0.2,
            steady_window: 2.0,
            max_time: 30.0,
            quiescence_window: 15.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmidSection {
    /// Identification disturbance bound; must overestimate the realized
    /// |d| plus differentiation error.
    pub d_id: f64,
    pub batch_size: usize,
    pub excitation_min_speed: f64,
    /// Relative margin of the initial (I, L, L_cm) intervals.
    pub geometry_margin: f64,
    /// Initial drag interval, kg·m².
    pub drag_lo: f64,
    pub drag_hi: f64,
}

impl Default for SmidSection {
    fn default() -> Self {
        Self {
            d_id: 20.0,
            batch_size: 10,
            excitation_min_speed: 0.5,
            geometry_margin: 0.02,
            drag_lo: 0.0,
            drag_hi: 6.0e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub plant: PlantSection,
    pub gains: GainsSection,
    pub ocp: OcpSection,
    pub scenario: ScenarioSection,
    pub smid: SmidSection,
}

impl Config {
    /// Scenario-kind defaults: the locally-restricted-tube comparison,
    /// the regional-disturbance comparison, and the adaptation cycles.
    pub fn for_scenario(kind: &str) -> Result<Self, ConfigError> {
        let mut cfg = Config::default();
        match kind {
            "regional-disturbance" | "b" => {
                cfg.scenario.kind = "regional-disturbance".into();
            }
            "restricted-tube" | "a" => {
                cfg.scenario = ScenarioSection {
                    kind: "restricted-tube".into(),
                    omega_max: 0.2,
                    omega_bands: vec![
                        BandEntry { lo: 1.5 * PI, hi: 2.0 * PI, value: 0.1 },
                        BandEntry { lo: 2.0 * PI, hi: 3.0 * PI, value: 0.05 },
                        BandEntry { lo: 3.0 * PI, hi: 3.5 * PI, value: 0.1 },
                    ],
                    disturbance_bands: Vec::new(),
                    region_bound: 0.0,
                    base_bound: 18.0,
                    resample_hz: 50.0,
                    // A long approach funnel on the restricted bands so
                    // the planner brakes progressively instead of
                    // meeting a wall of infeasible ceiling rows.
                    omega_band_ramp: 1.2,
                    ..ScenarioSection::default()
                };
            }
            "adaptation-cycles" | "adapt" => {
                cfg.scenario = ScenarioSection {
                    kind: "adaptation-cycles".into(),
                    setpoints: vec![5.0 * PI, PI],
                    omega_max: 11.5_f64.to_radians(),
                    disturbance_bands: Vec::new(),
                    region_bound: 0.0,
                    base_bound: 6.0,
                    resample_hz: 50.0,
                    max_time: 240.0,
                    ..ScenarioSection::default()
                };
                // The controller's drag model starts at the midpoint and
                // half-width of the wide identification interval.
                cfg.scenario.drag_nominal = 3.0e-3;
                cfg.scenario.drag_error = 3.0e-3;
                // Encoder-grade angle quantization: five-point
                // differentiation amplifies it by 64/(12 h²) ≈ ±10.7
                // rad/s², which is what makes the identification bound
                // D = 20 realistic and the contraction gradual.
                cfg.plant.measurement_noise = 8.0e-6;
                // Coarse identification bound, well above the realized
                // disturbance-plus-differentiation noise: the published
                // interval then contracts over several cycles, paced by
                // the speeds each cycle can reach.
                cfg.smid.d_id = 40.0;
            }
            "custom" => {
                cfg.scenario.kind = "custom".into();
            }
            other => {
                return Err(ConfigError::Invalid(format!("unknown scenario kind '{other}'")));
            }
        }
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.plant.params()?;
        self.gains.gains().validate().map_err(ConfigError::Invalid)?;
        let o = &self.ocp;
        if o.horizon < 2 || o.dt <= 0.0 || o.u_max <= 0.0 || o.speed_max <= 0.0 {
            return Err(ConfigError::Invalid("ocp section out of range".into()));
        }
        if o.planner_latency <= 0.0 {
            return Err(ConfigError::Invalid("planner latency must be positive".into()));
        }
        let s = &self.scenario;
        if s.setpoints.is_empty() {
            return Err(ConfigError::Invalid("at least one setpoint required".into()));
        }
        if s.omega_max <= 0.0 {
            return Err(ConfigError::Invalid("omega_max must be positive".into()));
        }
        for b in s.disturbance_bands.iter() {
            if !(0.0..=1.0).contains(&b.value) {
                return Err(ConfigError::Invalid("disturbance scale outside [0,1]".into()));
            }
        }
        if self.smid.drag_lo > self.smid.drag_hi {
            return Err(ConfigError::Invalid("empty drag interval".into()));
        }
        Ok(())
    }
}
