//! Discrete PI/PID laws with conditional-integration anti-windup.
//!
//! Both laws use the same positional form: the output is computed from the
//! stored integral, then the integral advances by `Ts * e` unless the
//! output is clamped and the error pushes further into the clamp.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Derivative filter bandwidth (rad/s).
    pub filter: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiGains {
    pub kp: f64,
    pub ki: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PidState {
    pub integral: f64,
    /// Filtered derivative term, already multiplied by `kd`.
    pub derivative: f64,
    pub prev_meas: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PiState {
    pub integral: f64,
}

fn integrate(integral: f64, e: f64, ts: f64, unsat: f64, lo: f64, hi: f64) -> f64 {
    let winding = (unsat > hi && e > 0.0) || (unsat < lo && e < 0.0);
    if winding {
        integral
    } else {
        integral + ts * e
    }
}

/// PID with the derivative acting on the measurement through a first-order
/// filter (backward Euler). Returns the clamped output.
pub fn pid_step(
    reference: f64,
    meas: f64,
    st: &mut PidState,
    g: &PidGains,
    ts: f64,
    lo: f64,
    hi: f64,
) -> f64 {
    pid_step_scaled(reference, meas, st, g, ts, lo, hi, 1.0)
}

/// [`pid_step`] with error and measurement increments multiplied by
/// `scale`. For a constant scale this equals the law with all three gains
/// scaled, and a varying scale leaves the stored integral consistent.
#[allow(clippy::too_many_arguments)]
pub fn pid_step_scaled(
    reference: f64,
    meas: f64,
    st: &mut PidState,
    g: &PidGains,
    ts: f64,
    lo: f64,
    hi: f64,
    scale: f64,
) -> f64 {
    let e = scale * (reference - meas);
    let nts = g.filter * ts;
    st.derivative = (st.derivative - scale * g.kd * g.filter * (meas - st.prev_meas)) / (1.0 + nts);
    st.prev_meas = meas;
    let unsat = g.kp * e + g.ki * st.integral + st.derivative;
    st.integral = integrate(st.integral, e, ts, unsat, lo, hi);
    unsat.clamp(lo, hi)
}

pub fn pi_step(reference: f64, meas: f64, st: &mut PiState, g: &PiGains, ts: f64, lo: f64, hi: f64) -> f64 {
    let e = reference - meas;
    let unsat = g.kp * e + g.ki * st.integral;
    st.integral = integrate(st.integral, e, ts, unsat, lo, hi);
    unsat.clamp(lo, hi)
}

/// Integral value that makes `kp e + ki I + extra` equal `target`.
pub fn bumpless_integral(target: f64, e: f64, kp: f64, ki: f64, extra: f64) -> f64 {
    if ki == 0.0 {
        0.0
    } else {
        (target - kp * e - extra) / ki
    }
}
