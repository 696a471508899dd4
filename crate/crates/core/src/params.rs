//! Static physical description of the vehicle, tires and drivetrain.
//!
//! [`PlantParams::reference`] is a small formula-student-like electric car
//! used throughout tests and shipped scenarios.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::WHEELS;

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("invalid parameter `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ParamError {
    ParamError::Invalid { field, reason: reason.into() }
}

/// Rigid-body and aerodynamic parameters. Positions are body-frame, x
/// forward, y left, z up, relative to the centre point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleParams {
    pub mass: f64,
    pub inertia: [[f64; 3]; 3],
    pub wheel_positions: [[f64; 3]; WHEELS],
    pub aero_center: [f64; 3],
    pub drag_coefficient: f64,
    pub air_density: f64,
    pub frontal_area: f64,
    pub gravity: f64,
    pub cg_height: f64,
    /// Road grade in radians, positive nose-up.
    #[serde(default)]
    pub road_grade: f64,
}

impl VehicleParams {
    pub fn inertia_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|r, c| self.inertia[r][c])
    }

    pub fn wheel_position(&self, i: usize) -> Vector3<f64> {
        Vector3::from(self.wheel_positions[i])
    }

    pub fn wheel_position_vectors(&self) -> [Vector3<f64>; WHEELS] {
        std::array::from_fn(|i| self.wheel_position(i))
    }

    pub fn aero_center_vector(&self) -> Vector3<f64> {
        Vector3::from(self.aero_center)
    }

    /// Longitudinal distance between the front and rear axle centres.
    pub fn wheelbase(&self) -> f64 {
        let p = &self.wheel_positions;
        0.5 * (p[0][0] + p[1][0]) - 0.5 * (p[2][0] + p[3][0])
    }

    pub fn front_track(&self) -> f64 {
        self.wheel_positions[0][1] - self.wheel_positions[1][1]
    }

    pub fn rear_track(&self) -> f64 {
        self.wheel_positions[2][1] - self.wheel_positions[3][1]
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.mass > 0.0) {
            return Err(invalid("mass", "must be positive"));
        }
        let theta = self.inertia_matrix();
        if (theta - theta.transpose()).abs().max() > 1e-12 * theta.abs().max() {
            return Err(invalid("inertia", "must be symmetric"));
        }
        if theta.cholesky().is_none() {
            return Err(invalid("inertia", "must be positive definite"));
        }
        for i in 0..WHEELS {
            for j in i + 1..WHEELS {
                if self.wheel_positions[i] == self.wheel_positions[j] {
                    return Err(invalid("wheel_positions", format!("wheels {i} and {j} coincide")));
                }
            }
        }
        let p = &self.wheel_positions;
        if !(p[0][1] > 0.0 && p[1][1] < 0.0 && p[2][1] > 0.0 && p[3][1] < 0.0) {
            return Err(invalid(
                "wheel_positions",
                "left wheels need y > 0 and right wheels y < 0",
            ));
        }
        if !(self.wheelbase() > 0.0) {
            return Err(invalid("wheel_positions", "front axle must lie ahead of the rear axle"));
        }
        for (field, v) in [
            ("drag_coefficient", self.drag_coefficient),
            ("air_density", self.air_density),
            ("frontal_area", self.frontal_area),
            ("cg_height", self.cg_height),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(invalid(field, "must be finite and non-negative"));
            }
        }
        if !(self.gravity > 0.0) {
            return Err(invalid("gravity", "must be positive"));
        }
        if !self.road_grade.is_finite() || self.road_grade.abs() >= std::f64::consts::FRAC_PI_2 {
            return Err(invalid("road_grade", "must lie in (-pi/2, pi/2)"));
        }
        Ok(())
    }
}

/// Magic-formula shaping coefficients for one direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pacejka {
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TireParams {
    pub longitudinal: Pacejka,
    pub lateral: Pacejka,
    /// Nominal road friction coefficient.
    pub mu: f64,
    pub radius: f64,
}

impl TireParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        for (field, p) in [("longitudinal", &self.longitudinal), ("lateral", &self.lateral)] {
            if !(p.b > 0.0 && p.c > 1.0 && p.c <= 2.0 && p.d > 0.0 && p.e.is_finite()) {
                return Err(invalid(field, "need B > 0, C in (1, 2], D > 0"));
            }
        }
        if !(self.mu > 0.0) {
            return Err(invalid("mu", "must be positive"));
        }
        if !(self.radius > 0.0) {
            return Err(invalid("radius", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrivetrainParams {
    /// Wheel plus reflected motor inertia.
    pub inertia: f64,
    pub radius: f64,
    pub time_constant: f64,
    pub torque_min: f64,
    pub torque_max: f64,
    pub viscous: f64,
    pub coulomb: f64,
    pub coulomb_width: f64,
}

impl DrivetrainParams {
    pub fn clamp_torque(&self, tau: f64) -> f64 {
        tau.clamp(self.torque_min, self.torque_max)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.inertia > 0.0) {
            return Err(invalid("inertia", "must be positive"));
        }
        if !(self.radius > 0.0) {
            return Err(invalid("radius", "must be positive"));
        }
        if !(self.time_constant > 0.0) {
            return Err(invalid("time_constant", "must be positive"));
        }
        if !(self.torque_min < 0.0 && self.torque_max > 0.0) {
            return Err(invalid("torque_min", "need torque_min < 0 < torque_max"));
        }
        if !(self.viscous >= 0.0 && self.coulomb >= 0.0) {
            return Err(invalid("viscous", "loss coefficients must be non-negative"));
        }
        if !(self.coulomb_width > 0.0) {
            return Err(invalid("coulomb_width", "must be positive"));
        }
        Ok(())
    }
}

/// Everything the plant needs. All four corners share tire and drivetrain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantParams {
    pub vehicle: VehicleParams,
    pub tire: TireParams,
    pub drivetrain: DrivetrainParams,
    /// Speed floor in the slip denominators, keeps standstill well posed.
    pub slip_speed_floor: f64,
    /// Apply the tire-interface factor to lateral force as well.
    #[serde(default)]
    pub eps_scales_lateral: bool,
}

impl PlantParams {
    /// Reference car: 300 kg, 1.53 m wheelbase, 1.2 m track, 0.2 m wheels.
    pub fn reference() -> Self {
        let (xf, xr, y) = (0.83, -0.70, 0.6);
        PlantParams {
            vehicle: VehicleParams {
                mass: 300.0,
                inertia: [[50.0, 0.0, 0.0], [0.0, 120.0, 0.0], [0.0, 0.0, 140.0]],
                wheel_positions: [[xf, y, 0.0], [xf, -y, 0.0], [xr, y, 0.0], [xr, -y, 0.0]],
                aero_center: [-0.1, 0.0, 0.0],
                drag_coefficient: 1.0,
                air_density: 1.2,
                frontal_area: 1.1,
                gravity: 9.81,
                cg_height: 0.3,
                road_grade: 0.0,
            },
            tire: TireParams {
                longitudinal: Pacejka { b: 10.0, c: 1.9, d: 1.0, e: 0.97 },
                lateral: Pacejka { b: 12.0, c: 1.3, d: 1.0, e: 0.0 },
                mu: 1.0,
                radius: 0.2,
            },
            drivetrain: DrivetrainParams {
                inertia: 0.4,
                radius: 0.2,
                time_constant: 0.01,
                torque_min: -250.0,
                torque_max: 250.0,
                viscous: 0.005,
                coulomb: 1.0,
                coulomb_width: 0.5,
            },
            slip_speed_floor: 1.5,
            eps_scales_lateral: false,
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        self.vehicle.validate()?;
        self.tire.validate()?;
        self.drivetrain.validate()?;
        if (self.tire.radius - self.drivetrain.radius).abs() > 1e-12 {
            return Err(invalid("drivetrain.radius", "must equal tire.radius"));
        }
        if !(self.slip_speed_floor > 0.0) {
            return Err(invalid("slip_speed_floor", "must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_set_is_valid() {
        let p = PlantParams::reference();
        p.validate().unwrap();
        assert!((p.vehicle.wheelbase() - 1.53).abs() < 1e-12);
        assert!((p.vehicle.front_track() - 1.2).abs() < 1e-12);
    }

    #[test]
    fn rejects_swapped_sides() {
        let mut p = PlantParams::reference();
        p.vehicle.wheel_positions[0][1] = -0.6;
        p.vehicle.wheel_positions[1][1] = 0.6;
        assert!(p.validate().is_err());
    }

    #[test]
    fn rejects_indefinite_inertia() {
        let mut p = PlantParams::reference();
        p.vehicle.inertia[2][2] = -1.0;
        assert!(matches!(p.validate(), Err(ParamError::Invalid { field: "inertia", .. })));
    }

    #[test]
    fn rejects_bad_torque_limits() {
        let mut p = PlantParams::reference();
        p.drivetrain.torque_min = 1.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let p = PlantParams::reference();
        let text = toml::to_string(&p).unwrap();
        let back: PlantParams = toml::from_str(&text).unwrap();
        assert_eq!(p, back);
    }
}
