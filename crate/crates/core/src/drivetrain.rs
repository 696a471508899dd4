//! Wheel spin dynamics and first-order actuator lag.
//!
//! Sign convention: `fx_reaction` is the longitudinal road force acting on
//! the wheel, i.e. the negative of the traction force that propels the body.

use crate::params::DrivetrainParams;

/// `dw/dt = (tau + Fx r + tau_res(w)) / J`.
pub fn wheel_acceleration(tau: f64, fx_reaction: f64, omega: f64, p: &DrivetrainParams) -> f64 {
    (tau + fx_reaction * p.radius + resistive_torque(omega, p)) / p.inertia
}

/// Combined wheel and motor losses: viscous plus smoothed Coulomb.
pub fn resistive_torque(omega: f64, p: &DrivetrainParams) -> f64 {
    -p.viscous * omega - p.coulomb * (omega / p.coulomb_width).tanh()
}

/// `dtau/dt = (tau_ref - tau) / T`; `tau_ref` must already be clamped.
pub fn actuator_lag_derivative(tau: f64, tau_ref: f64, time_constant: f64) -> f64 {
    (tau_ref - tau) / time_constant
}
