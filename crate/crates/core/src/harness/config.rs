//! Scenario configuration: TOML schema, loading and validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::lane_change::LaneChange;
use super::timeline::Timeline;
use crate::baseline::BaselineGains;
use crate::controller::ControllerGains;
use crate::params::{ParamError, PlantParams};
use crate::transform::Mode;
use crate::{WHEELS, WHEEL_NAMES};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Syntax(String),
    #[error("at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("parameter set: {0}")]
    Params(#[from] ParamError),
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.into(), reason: reason.into() }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    #[default]
    Proposed,
    Baseline,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialState {
    pub vx: f64,
    pub vy: f64,
    pub yaw_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WheelTimelines {
    pub fl: Option<Timeline>,
    pub fr: Option<Timeline>,
    pub rl: Option<Timeline>,
    pub rr: Option<Timeline>,
}

impl WheelTimelines {
    pub fn get(&self, i: usize) -> Option<&Timeline> {
        [&self.fl, &self.fr, &self.rl, &self.rr][i].as_ref()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Timelines {
    pub v_ref: Option<Timeline>,
    pub a_ref: Option<Timeline>,
    pub yaw_rate_ref: Option<Timeline>,
    pub steer: Option<Timeline>,
    pub eps: WheelTimelines,
    pub mu: WheelTimelines,
}

fn default_dt() -> f64 {
    0.001
}

fn default_parameter_set() -> String {
    "reference".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub duration: f64,
    /// Plant integration step (s).
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub mode: Mode,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default)]
    pub controller: ControllerKind,
    /// `reference` or a path to a parameter TOML, relative to the config.
    #[serde(default = "default_parameter_set")]
    pub parameter_set: String,
    #[serde(default)]
    pub initial: InitialState,
    #[serde(default)]
    pub gains: ControllerGains,
    #[serde(default)]
    pub baseline: BaselineGains,
    #[serde(default)]
    pub timelines: Timelines,
    #[serde(default)]
    pub lane_change: Option<LaneChange>,
}

/// Parses TOML text, reporting schema errors with their field path.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let de = toml::Deserializer::parse(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
    serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Schema {
        path: e.path().to_string(),
        message: e.inner().message().to_string(),
    })
}

/// A validated scenario with its parameter set resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub cfg: ScenarioConfig,
    pub params: PlantParams,
}

/// Reads, parses and validates a scenario file.
pub fn load_config(path: &Path) -> Result<Scenario, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    let cfg = parse_config(&text)?;
    Scenario::new(cfg, path.parent())
}

/// Resolves a parameter set: `reference` or a TOML path relative to `base`.
pub fn load_params(name: &str, base: Option<&Path>) -> Result<PlantParams, ConfigError> {
    if name == "reference" {
        return Ok(PlantParams::reference());
    }
    let path = base.map_or_else(|| PathBuf::from(name), |b| b.join(name));
    let text = std::fs::read_to_string(&path)
        .map_err(|source| ConfigError::Io { path: path.clone(), source })?;
    let de = toml::Deserializer::parse(&text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
    serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Schema {
        path: format!("parameter_set.{}", e.path()),
        message: e.inner().message().to_string(),
    })
}

impl Scenario {
    pub fn new(cfg: ScenarioConfig, base: Option<&Path>) -> Result<Self, ConfigError> {
        let params = load_params(&cfg.parameter_set, base)?;
        Scenario::with_params(cfg, params)
    }

    pub fn with_params(cfg: ScenarioConfig, params: PlantParams) -> Result<Self, ConfigError> {
        params.validate()?;
        validate(&cfg)?;
        Ok(Scenario { cfg, params })
    }

    /// Number of plant steps per control sample.
    pub fn substeps(&self) -> usize {
        (self.cfg.gains.ts / self.cfg.dt).round() as usize
    }

    pub fn samples(&self) -> usize {
        (self.cfg.duration / self.cfg.gains.ts).round() as usize
    }

    pub fn mu(&self, i: usize, t: f64) -> f64 {
        self.cfg.timelines.mu.get(i).map_or(self.params.tire.mu, |tl| tl.at(t))
    }

    pub fn eps(&self, i: usize, t: f64) -> f64 {
        self.cfg.timelines.eps.get(i).map_or(1.0, |tl| tl.at(t))
    }

    pub fn steer(&self, t: f64) -> f64 {
        let base = self.cfg.timelines.steer.as_ref().map_or(0.0, |tl| tl.at(t));
        let lc = self
            .cfg
            .lane_change
            .as_ref()
            .map_or(0.0, |l| l.steer(t, self.params.vehicle.wheelbase()));
        base + lc
    }

    pub fn yaw_rate_ref(&self, t: f64) -> f64 {
        let base = self.cfg.timelines.yaw_rate_ref.as_ref().map_or(0.0, |tl| tl.at(t));
        base + self.cfg.lane_change.as_ref().map_or(0.0, |l| l.yaw_rate(t))
    }

    pub fn v_ref(&self, t: f64) -> f64 {
        match self.cfg.mode {
            Mode::SelfDriving => self.cfg.timelines.v_ref.as_ref().map_or(0.0, |tl| tl.at(t)),
            Mode::DriverInLoop => {
                self.cfg.initial.vx + self.cfg.timelines.a_ref.as_ref().map_or(0.0, |tl| tl.integral(t))
            }
        }
    }

    pub fn a_ref(&self, t: f64) -> f64 {
        match self.cfg.mode {
            Mode::SelfDriving => 0.0,
            Mode::DriverInLoop => self.cfg.timelines.a_ref.as_ref().map_or(0.0, |tl| tl.at(t)),
        }
    }
}

fn check_timeline(tl: &Option<Timeline>, field: &str, duration: f64) -> Result<(), ConfigError> {
    match tl {
        Some(t) => t.validate(duration).map_err(|r| invalid(field, r)),
        None => Ok(()),
    }
}

fn validate(cfg: &ScenarioConfig) -> Result<(), ConfigError> {
    if !(cfg.duration > 0.0 && cfg.duration.is_finite()) {
        return Err(invalid("duration", "must be positive"));
    }
    if !(cfg.dt > 0.0) {
        return Err(invalid("dt", "must be positive"));
    }
    cfg.gains.validate().map_err(|r| invalid("gains", r))?;
    let ratio = cfg.gains.ts / cfg.dt;
    if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
        return Err(invalid("dt", format!("must divide gains.ts = {}", cfg.gains.ts)));
    }
    let samples = cfg.duration / cfg.gains.ts;
    if (samples - samples.round()).abs() > 1e-9 {
        return Err(invalid("duration", "must be a whole number of control samples"));
    }
    if !(cfg.gamma >= 0.0 && cfg.gamma.is_finite()) {
        return Err(invalid("gamma", "must be finite and non-negative"));
    }
    let tl = &cfg.timelines;
    let d = cfg.duration;
    match cfg.mode {
        Mode::SelfDriving if tl.v_ref.is_none() => {
            return Err(invalid("timelines.v_ref", "required in self_driving mode"));
        }
        Mode::DriverInLoop if tl.a_ref.is_none() => {
            return Err(invalid("timelines.a_ref", "required in driver_in_loop mode"));
        }
        _ => {}
    }
    check_timeline(&tl.v_ref, "timelines.v_ref", d)?;
    check_timeline(&tl.a_ref, "timelines.a_ref", d)?;
    check_timeline(&tl.yaw_rate_ref, "timelines.yaw_rate_ref", d)?;
    check_timeline(&tl.steer, "timelines.steer", d)?;
    for i in 0..WHEELS {
        let name = WHEEL_NAMES[i];
        if let Some(t) = tl.eps.get(i) {
            t.validate(d).map_err(|r| invalid(format!("timelines.eps.{name}"), r))?;
            if t.0.iter().any(|s| s.value.map_or(false, |v| v <= 0.0) || s.ramp.map_or(false, |r| r[0] <= 0.0 || r[1] <= 0.0)) {
                return Err(invalid(format!("timelines.eps.{name}"), "values must be positive"));
            }
        }
        if let Some(t) = tl.mu.get(i) {
            t.validate(d).map_err(|r| invalid(format!("timelines.mu.{name}"), r))?;
            if t.0.iter().any(|s| s.value.map_or(false, |v| v < 0.0) || s.ramp.map_or(false, |r| r[0] < 0.0 || r[1] < 0.0)) {
                return Err(invalid(format!("timelines.mu.{name}"), "values must be non-negative"));
            }
        }
    }
    if let Some(lc) = &cfg.lane_change {
        lc.validate().map_err(|r| invalid("lane_change", r))?;
    }
    let init = [cfg.initial.vx, cfg.initial.vy, cfg.initial.yaw_rate];
    if init.iter().any(|v| !v.is_finite()) {
        return Err(invalid("initial", "must be finite"));
    }
    Ok(())
}
