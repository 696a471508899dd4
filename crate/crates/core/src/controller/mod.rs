//! Wheel-level cascade: pivot velocity P, pivot acceleration PI, slip PID.
//!
//! Runs at `Ts` with the plant holding the torque command between samples.
//! Below the speed cutoff `zeta` the slip loops are bypassed and an
//! open-loop launch ramp proportional to the demanded acceleration is used.

pub mod pid;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::PlantParams;
use crate::tire::slip_ratio;
use crate::transform::{
    cp_to_wheel_velocity, cp_to_wheel_velocity_driver, traction_limit_adjust, traction_limit_triggered,
    wheel_frame_velocity, wheel_steer, Mode, MotionReference,
};
use crate::WHEELS;
pub use pid::{PiGains, PiState, PidGains, PidState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("controller fault: non-finite {0}")]
    NonFinite(&'static str),
}

/// Tuning of the cascade. Values shipped in [`ControllerGains::default`]
/// were tuned on the reference vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerGains {
    pub slip: PidGains,
    pub accel: PiGains,
    pub velocity_kp: f64,
    pub ts: f64,
    pub lambda_max: f64,
    pub zeta: f64,
    /// Arbitration fires when any slip reference reaches `theta * lambda_max`.
    pub theta: f64,
    /// Arbitration releases below `(theta - release) * lambda_max`.
    pub release: f64,
    /// Launch torque per unit demanded acceleration (N m s^2/m).
    pub launch_gain: f64,
    /// Launch torque slew limit (N m/s).
    pub launch_rate: f64,
    /// Below this speed the slip loop gains shrink in proportion to speed,
    /// offsetting the `1/vx` slip sensitivity. Zero disables scheduling.
    pub slip_schedule_speed: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        ControllerGains {
            slip: PidGains { kp: 2500.0, ki: 30000.0, kd: 10.0, filter: 40.0 },
            accel: PiGains { kp: 0.004, ki: 0.15 },
            velocity_kp: 8.0,
            ts: 0.01,
            lambda_max: 0.15,
            zeta: 2.0,
            theta: 0.9,
            release: 0.05,
            launch_gain: 15.0,
            launch_rate: 1000.0,
            slip_schedule_speed: 8.0,
        }
    }
}

impl ControllerGains {
    /// Multiplier on the slip loop gains at longitudinal speed `vx`.
    pub fn slip_gain_scale(&self, vx: f64) -> f64 {
        if self.slip_schedule_speed > 0.0 {
            (vx.abs() / self.slip_schedule_speed).min(1.0)
        } else {
            1.0
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let finite = [
            self.slip.kp, self.slip.ki, self.slip.kd, self.slip.filter, self.accel.kp, self.accel.ki,
            self.velocity_kp, self.launch_gain, self.launch_rate, self.slip_schedule_speed,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err("gains must be finite".into());
        }
        if !(self.ts > 0.0) {
            return Err("ts must be positive".into());
        }
        if !(self.lambda_max > 0.0 && self.lambda_max < 1.0) {
            return Err("lambda_max must lie in (0, 1)".into());
        }
        if !(self.zeta > 0.0) {
            return Err("zeta must be positive".into());
        }
        if !(self.theta > 0.0 && self.theta <= 1.0 && self.release >= 0.0 && self.release < self.theta) {
            return Err("need 0 <= release < theta <= 1".into());
        }
        if self.slip_schedule_speed < 0.0 {
            return Err("slip_schedule_speed must be non-negative".into());
        }
        if !(self.slip.filter > 0.0) {
            return Err("slip.filter must be positive".into());
        }
        Ok(())
    }
}

/// Vehicle geometry and actuator limits the controller is built for.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    pub gains: ControllerGains,
    pub wheel_positions: [Vector3<f64>; WHEELS],
    pub radius: f64,
    pub torque_min: f64,
    pub torque_max: f64,
}

impl ControllerConfig {
    pub fn new(gains: ControllerGains, p: &PlantParams) -> Self {
        ControllerConfig {
            gains,
            wheel_positions: p.vehicle.wheel_position_vectors(),
            radius: p.tire.radius,
            torque_min: p.drivetrain.torque_min,
            torque_max: p.drivetrain.torque_max,
        }
    }
}

/// Sensor set available at each sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurements {
    pub v: Vector3<f64>,
    pub omega: Vector3<f64>,
    /// Time derivative of the body-frame velocity.
    pub accel: Vector3<f64>,
    /// Time derivative of the body angular rate.
    pub angular_accel: Vector3<f64>,
    pub wheel_speed: [f64; WHEELS],
    pub steer: f64,
}

impl Measurements {
    fn is_finite(&self) -> bool {
        self.v.iter().chain(&self.omega).chain(&self.accel).chain(&self.angular_accel).all(|x| x.is_finite())
            && self.wheel_speed.iter().all(|x| x.is_finite())
            && self.steer.is_finite()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WheelControllerState {
    pub slip: PidState,
    pub accel: PiState,
    pub lambda_ref: f64,
    pub a_ref: f64,
    pub tau_ref: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ControllerState {
    pub wheels: [WheelControllerState; WHEELS],
    pub arbitration: bool,
    /// Slip loops engaged (speed above the cutoff).
    pub active: bool,
    pub faulted: bool,
}

/// Everything computed during one update, for tracing.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ControlOutput {
    pub torque_ref: [f64; WHEELS],
    pub lambda_ref: [f64; WHEELS],
    pub lambda_meas: [f64; WHEELS],
    pub a_x_ref: [f64; WHEELS],
    pub a_lat: [f64; WHEELS],
    pub v_ref_wheel: [f64; WHEELS],
    pub v_meas_wheel: [f64; WHEELS],
    pub arbitration: bool,
    pub launch: bool,
}

pub fn velocity_p_step(v_ref: f64, v_meas: f64, kp: f64) -> f64 {
    kp * (v_ref - v_meas)
}

/// Slip PID for one wheel at gain scale `scale`; output clamped to the
/// torque limits.
pub fn slip_pid_step(
    lambda_ref: f64,
    lambda_meas: f64,
    st: &mut PidState,
    g: &ControllerGains,
    scale: f64,
    torque_min: f64,
    torque_max: f64,
) -> f64 {
    pid::pid_step_scaled(lambda_ref, lambda_meas, st, &g.slip, g.ts, torque_min, torque_max, scale)
}

/// Acceleration PI for one wheel; output is a slip reference within
/// `[-lambda_max, lambda_max]`.
pub fn accel_pi_step(a_ref: f64, a_meas: f64, st: &mut PiState, g: &ControllerGains) -> f64 {
    pid::pi_step(a_ref, a_meas, st, &g.accel, g.ts, -g.lambda_max, g.lambda_max)
}

/// Measured slip of each wheel from the vehicle motion and wheel speeds.
pub fn measured_slip(meas: &Measurements, cfg: &ControllerConfig) -> [f64; WHEELS] {
    let deltas = wheel_steer(meas.steer);
    std::array::from_fn(|i| {
        let vb = cp_to_wheel_velocity(&meas.v, &meas.omega, &cfg.wheel_positions[i], 0.0);
        let (vx, _) = wheel_frame_velocity(&vb, deltas[i]);
        slip_ratio(meas.wheel_speed[i], cfg.radius, vx).unwrap_or(0.0)
    })
}

/// Pivot velocity references, the matching measurements and the common
/// longitudinal acceleration demand.
fn pivot_velocity_loop(
    refs: &MotionReference,
    meas: &Measurements,
    cfg: &ControllerConfig,
) -> ([f64; WHEELS], [f64; WHEELS], f64) {
    let w_ref = Vector3::new(0.0, 0.0, refs.yaw_rate_ref);
    let kv = cfg.gains.velocity_kp;
    let mut v_ref = [0.0; WHEELS];
    let mut v_meas = [0.0; WHEELS];
    for (i, r) in cfg.wheel_positions.iter().enumerate() {
        let measured = cp_to_wheel_velocity(&meas.v, &meas.omega, r, refs.gamma).x;
        match refs.mode {
            Mode::SelfDriving => {
                let v = Vector3::new(refs.v_ref, 0.0, 0.0);
                v_ref[i] = cp_to_wheel_velocity(&v, &w_ref, r, refs.gamma).x;
                v_meas[i] = measured;
            }
            Mode::DriverInLoop => {
                v_ref[i] = cp_to_wheel_velocity_driver(&w_ref, r, refs.gamma);
                v_meas[i] = measured - meas.v.x;
            }
        }
    }
    let a_common = match refs.mode {
        Mode::SelfDriving => velocity_p_step(refs.v_ref, meas.v.x, kv),
        Mode::DriverInLoop => refs.a_ref,
    };
    (v_ref, v_meas, a_common)
}

/// One control sample. Pure: returns the output and the successor state.
pub fn controller_update(
    refs: &MotionReference,
    meas: &Measurements,
    cfg: &ControllerConfig,
    st: &ControllerState,
) -> Result<(ControlOutput, ControllerState), ControllerError> {
    if !meas.is_finite() {
        return Err(ControllerError::NonFinite("measurement"));
    }
    let r = [refs.v_ref, refs.a_ref, refs.yaw_rate_ref, refs.gamma, refs.steer];
    if r.iter().any(|x| !x.is_finite()) {
        return Err(ControllerError::NonFinite("reference"));
    }
    let mut next = *st;
    let mut out = ControlOutput::default();
    if st.faulted {
        return Ok((out, next));
    }
    let g = &cfg.gains;
    let (v_ref, v_meas, a_common) = pivot_velocity_loop(refs, meas, cfg);
    let lambda_meas = measured_slip(meas, cfg);
    out.v_ref_wheel = v_ref;
    out.v_meas_wheel = v_meas;
    out.lambda_meas = lambda_meas;

    if meas.v.norm() <= g.zeta {
        let target = (g.launch_gain * a_common).clamp(cfg.torque_min, cfg.torque_max);
        let step = g.launch_rate * g.ts;
        for i in 0..WHEELS {
            let prev = st.wheels[i].tau_ref;
            let tau = prev + (target - prev).clamp(-step, step);
            next.wheels[i].tau_ref = tau;
            next.wheels[i].lambda_ref = 0.0;
            next.wheels[i].a_ref = a_common;
            out.torque_ref[i] = tau;
            out.a_x_ref[i] = a_common;
        }
        next.active = false;
        next.arbitration = false;
        out.launch = true;
        return Ok((out, next));
    }

    // Split the pivot loop output into the common demand and the
    // per-wheel rotational part.
    let a_lat: [f64; WHEELS] = std::array::from_fn(|i| {
        let total = velocity_p_step(v_ref[i], v_meas[i], g.velocity_kp);
        match refs.mode {
            Mode::SelfDriving => total - a_common,
            Mode::DriverInLoop => total,
        }
    });
    let prev_lambda = st.wheels.map(|w| w.lambda_ref);
    let level = if st.arbitration { g.theta - g.release } else { g.theta };
    next.arbitration = st.active && traction_limit_triggered(&prev_lambda, g.lambda_max, level);
    let a_x_ref = if next.arbitration {
        traction_limit_adjust(a_common, &a_lat, &prev_lambda, g.lambda_max, level)
    } else {
        crate::transform::wheel_acceleration_ref(a_common, &a_lat)
    };
    let a_meas: [f64; WHEELS] = std::array::from_fn(|i| {
        cp_to_wheel_velocity(&meas.accel, &meas.angular_accel, &cfg.wheel_positions[i], refs.gamma).x
    });

    // Start every acceleration loop from one common slip reference. In
    // straight driving the loops see identical errors, so per-wheel offsets
    // would otherwise persist.
    let scale = g.slip_gain_scale(meas.v.x);
    let lam0 = (lambda_meas.iter().sum::<f64>() / WHEELS as f64).clamp(-g.lambda_max, g.lambda_max);
    for i in 0..WHEELS {
        let w = &mut next.wheels[i];
        if !st.active {
            w.accel.integral =
                pid::bumpless_integral(lam0, a_x_ref[i] - a_meas[i], g.accel.kp, g.accel.ki, 0.0);
            w.slip = PidState {
                integral: pid::bumpless_integral(
                    st.wheels[i].tau_ref,
                    scale * (lam0 - lambda_meas[i]),
                    g.slip.kp,
                    g.slip.ki,
                    0.0,
                ),
                derivative: 0.0,
                prev_meas: lambda_meas[i],
            };
        }
        let lam_ref = accel_pi_step(a_x_ref[i], a_meas[i], &mut w.accel, g);
        let tau = slip_pid_step(lam_ref, lambda_meas[i], &mut w.slip, g, scale, cfg.torque_min, cfg.torque_max);
        w.lambda_ref = lam_ref;
        w.a_ref = a_x_ref[i];
        w.tau_ref = tau;
        out.torque_ref[i] = tau;
        out.lambda_ref[i] = lam_ref;
    }
    next.active = true;
    out.a_x_ref = a_x_ref;
    out.a_lat = a_lat;
    out.arbitration = next.arbitration;
    Ok((out, next))
}

/// Stateful wrapper that latches torque to zero after a fault.
#[derive(Debug, Clone)]
pub struct TractionController {
    pub cfg: ControllerConfig,
    pub state: ControllerState,
}

impl TractionController {
    pub fn new(cfg: ControllerConfig) -> Self {
        TractionController { cfg, state: ControllerState::default() }
    }

    pub fn update(&mut self, refs: &MotionReference, meas: &Measurements) -> Result<ControlOutput, ControllerError> {
        match controller_update(refs, meas, &self.cfg, &self.state) {
            Ok((out, st)) => {
                self.state = st;
                Ok(out)
            }
            Err(e) => {
                self.state.faulted = true;
                for w in self.state.wheels.iter_mut() {
                    w.tau_ref = 0.0;
                }
                Err(e)
            }
        }
    }

    pub fn reset(&mut self) {
        self.state = ControllerState::default();
    }
}
