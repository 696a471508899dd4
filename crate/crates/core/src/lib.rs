//! Twin-track four-wheel-drive vehicle simulation with wheel-level
//! traction control derived from vehicle-motion feedback.
//!
//! The crate is organised bottom-up: tire and drivetrain kernels, the
//! rigid-body plant, the vehicle-to-wheel transformation, the cascaded
//! wheel controller, a least-squares allocation baseline, linear analysis
//! tools and the scenario harness.

pub mod analysis;
pub mod baseline;
pub mod controller;
pub mod drivetrain;
pub mod harness;
pub mod ode;
pub mod params;
pub mod tire;
pub mod transform;
pub mod vehicle;

/// Wheel count, ordered front-left, front-right, rear-left, rear-right.
pub const WHEELS: usize = 4;

/// Display names in wheel order.
pub const WHEEL_NAMES: [&str; WHEELS] = ["fl", "fr", "rl", "rr"];
