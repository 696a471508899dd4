//! Mapping of vehicle-level signals to the four wheel pivots.
//!
//! The same map is applied to references and to measurements, so each wheel
//! tracks a pivot velocity that is unique for a given planar motion.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::WHEELS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    SelfDriving,
    DriverInLoop,
}

/// Vehicle-level set points for one control sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionReference {
    pub mode: Mode,
    /// Longitudinal speed, consumed in [`Mode::SelfDriving`].
    pub v_ref: f64,
    /// Longitudinal acceleration, consumed in [`Mode::DriverInLoop`].
    pub a_ref: f64,
    pub yaw_rate_ref: f64,
    /// Lateral preference gain, zero recovers rigid-body kinematics.
    pub gamma: f64,
    pub steer: f64,
}

/// Per-wheel kinematic references and the matching measurements.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WheelKinematicRef {
    pub v_ref: [f64; WHEELS],
    pub v_meas: [f64; WHEELS],
    pub a_ref: [f64; WHEELS],
    pub a_meas: [f64; WHEELS],
}

fn preference_term(omega: &Vector3<f64>, r: &Vector3<f64>, gamma: f64) -> Vector3<f64> {
    Vector3::new(gamma * (-omega.z * r.y), 0.0, 0.0)
}

/// `v + Omega x r + gamma_term`.
pub fn cp_to_wheel_velocity(
    v: &Vector3<f64>,
    omega: &Vector3<f64>,
    r: &Vector3<f64>,
    gamma: f64,
) -> Vector3<f64> {
    v + omega.cross(r) + preference_term(omega, r, gamma)
}

/// Driver-mode reference: rotational part only, the translation is carried
/// by the acceleration reference instead.
pub fn cp_to_wheel_velocity_driver(omega_ref: &Vector3<f64>, r: &Vector3<f64>, gamma: f64) -> f64 {
    (omega_ref.cross(r) + preference_term(omega_ref, r, gamma)).x
}

pub fn wheel_acceleration_ref(a_ref: f64, a_lat: &[f64; WHEELS]) -> [f64; WHEELS] {
    a_lat.map(|a| a_ref + a)
}

/// Whether the arbitration branch fires for the given slip references.
pub fn traction_limit_triggered(lambda_ref: &[f64; WHEELS], lambda_max: f64, threshold: f64) -> bool {
    lambda_ref.iter().any(|l| l.abs() >= threshold * lambda_max)
}

/// Near the traction limit the yaw demand keeps priority: every wheel is
/// shifted down by the largest lateral term so none exceeds `a_ref`.
pub fn traction_limit_adjust(
    a_ref: f64,
    a_lat: &[f64; WHEELS],
    lambda_ref: &[f64; WHEELS],
    lambda_max: f64,
    threshold: f64,
) -> [f64; WHEELS] {
    if traction_limit_triggered(lambda_ref, lambda_max, threshold) {
        let a_lat_max = a_lat.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // Grouped so the wheel holding the maximum receives `a_ref` exactly.
        a_lat.map(|a| a_ref + (a - a_lat_max))
    } else {
        wheel_acceleration_ref(a_ref, a_lat)
    }
}

/// Rotates a pivot-frame velocity into the wheel frame steered by `delta`.
pub fn wheel_frame_velocity(v_pivot: &Vector3<f64>, delta: f64) -> (f64, f64) {
    let (s, c) = delta.sin_cos();
    (v_pivot.x * c + v_pivot.y * s, -v_pivot.x * s + v_pivot.y * c)
}

/// Inverse of [`wheel_frame_velocity`] for forces: wheel frame to pivot frame.
pub fn wheel_to_pivot(fx: f64, fy: f64, delta: f64) -> (f64, f64) {
    let (s, c) = delta.sin_cos();
    (fx * c - fy * s, fx * s + fy * c)
}

/// Steering angle of each wheel; both fronts share `delta`, rears fixed.
pub fn wheel_steer(delta: f64) -> [f64; WHEELS] {
    [delta, delta, 0.0, 0.0]
}

/// Recovers planar motion `(vx, vy, yaw rate)` from the pivot velocities of
/// three wheels, assuming no lateral preference term.
pub fn reconstruct_planar(
    wheels: [(Vector3<f64>, Vector3<f64>); 3],
) -> Option<(f64, f64, f64)> {
    // Rows: vx_i = vx - r_y,i * wz ; vy_i = vy + r_x,i * wz.
    let mut a = nalgebra::SMatrix::<f64, 6, 3>::zeros();
    let mut b = nalgebra::SVector::<f64, 6>::zeros();
    for (k, (r, v)) in wheels.iter().enumerate() {
        a[(2 * k, 0)] = 1.0;
        a[(2 * k, 2)] = -r.y;
        b[2 * k] = v.x;
        a[(2 * k + 1, 1)] = 1.0;
        a[(2 * k + 1, 2)] = r.x;
        b[2 * k + 1] = v.y;
    }
    let qr = a.qr();
    let x = qr.r().try_inverse()? * qr.q().transpose() * b;
    Some((x[0], x[1], x[2]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn pure_translation() {
        let v = Vector3::new(3.0, -1.0, 0.0);
        let r = Vector3::new(1.0, 0.5, 0.0);
        assert_eq!(cp_to_wheel_velocity(&v, &Vector3::zeros(), &r, 7.0), v);
    }

    #[test]
    fn rotation_examples() {
        let v = Vector3::new(10.0, 0.0, 0.0);
        let w = Vector3::new(0.0, 0.0, 1.0);
        let r = Vector3::new(1.2, -0.75, 0.0);
        let out = cp_to_wheel_velocity(&v, &w, &r, 0.0);
        assert_relative_eq!(out.x, 10.75, epsilon = 1e-12);
        assert_relative_eq!(out.y, 1.2, epsilon = 1e-12);
        let out = cp_to_wheel_velocity(&v, &w, &r, 10.0);
        assert_relative_eq!(out.x, 18.25, epsilon = 1e-12);
    }

    #[test]
    fn driver_mode_examples() {
        let w = Vector3::new(0.0, 0.0, 0.5);
        let left = Vector3::new(1.0, 0.75, 0.0);
        let right = Vector3::new(1.0, -0.75, 0.0);
        assert_eq!(cp_to_wheel_velocity_driver(&Vector3::zeros(), &left, 10.0), 0.0);
        assert_relative_eq!(cp_to_wheel_velocity_driver(&w, &left, 0.0), -0.375);
        assert_relative_eq!(cp_to_wheel_velocity_driver(&w, &right, 0.0), 0.375);
        assert_relative_eq!(
            cp_to_wheel_velocity_driver(&w, &left, 10.0),
            11.0 * cp_to_wheel_velocity_driver(&w, &left, 0.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn acceleration_ref_examples() {
        assert_eq!(wheel_acceleration_ref(2.0, &[0.0; 4]), [2.0; 4]);
        let out = wheel_acceleration_ref(2.0, &[0.3, -0.3, 0.1, -0.1]);
        for (o, e) in out.iter().zip([2.3, 1.7, 2.1, 1.9]) {
            assert_relative_eq!(*o, e, epsilon = 1e-12);
        }
        assert_relative_eq!(out.iter().sum::<f64>() / 4.0, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn arbitration_examples() {
        let a_lat = [0.5, -0.5, 0.2, -0.2];
        let quiet = traction_limit_adjust(3.0, &a_lat, &[0.01; 4], 0.15, 0.9);
        assert_eq!(quiet, wheel_acceleration_ref(3.0, &a_lat));
        let out = traction_limit_adjust(3.0, &a_lat, &[0.15, 0.0, 0.0, 0.0], 0.15, 0.9);
        for (o, e) in out.iter().zip([3.0, 2.0, 2.7, 2.3]) {
            assert_relative_eq!(*o, e, epsilon = 1e-12);
        }
        let out = traction_limit_adjust(3.0, &[0.4; 4], &[0.2; 4], 0.15, 0.9);
        assert_eq!(out, [3.0; 4]);
    }

    #[test]
    fn wheel_frame_examples() {
        let v = Vector3::new(10.0, 1.0, 0.0);
        assert_eq!(wheel_frame_velocity(&v, 0.0), (10.0, 1.0));
        let (x, y) = wheel_frame_velocity(&Vector3::new(1.0, 0.0, 0.0), std::f64::consts::FRAC_PI_2);
        assert!(x.abs() < 1e-15);
        assert_relative_eq!(y, -1.0);
        let (x, y) = wheel_frame_velocity(&v, 0.1);
        assert_relative_eq!(x, 10.0 * 0.1f64.cos() + 0.1f64.sin(), epsilon = 1e-12);
        assert_relative_eq!(y, -10.0 * 0.1f64.sin() + 0.1f64.cos(), epsilon = 1e-12);
        assert!((x - 10.0499).abs() < 1e-4 && (y + 0.0033).abs() < 1e-4);
    }

    #[test]
    fn force_rotation_inverts_velocity_rotation() {
        let (fx, fy) = wheel_to_pivot(3.0, -2.0, 0.3);
        let back = wheel_frame_velocity(&Vector3::new(fx, fy, 0.0), 0.3);
        assert_relative_eq!(back.0, 3.0, epsilon = 1e-12);
        assert_relative_eq!(back.1, -2.0, epsilon = 1e-12);
    }

    fn sample_geometry() -> [Vector3<f64>; 4] {
        [
            Vector3::new(0.83, 0.6, 0.0),
            Vector3::new(0.83, -0.6, 0.0),
            Vector3::new(-0.7, 0.6, 0.0),
            Vector3::new(-0.7, -0.6, 0.0),
        ]
    }

    proptest! {
        #[test]
        fn zero_gamma_is_rigid_body(vx in -40.0f64..40.0, vy in -5.0f64..5.0, wz in -2.0f64..2.0) {
            let v = Vector3::new(vx, vy, 0.0);
            let w = Vector3::new(0.0, 0.0, wz);
            for r in sample_geometry() {
                let out = cp_to_wheel_velocity(&v, &w, &r, 0.0);
                prop_assert_eq!(out, v + w.cross(&r));
            }
        }

        #[test]
        fn mirrored_wheels_are_antisymmetric(wz in -2.0f64..2.0, gamma in 0.0f64..20.0) {
            let w = Vector3::new(0.0, 0.0, wz);
            let g = sample_geometry();
            let l = cp_to_wheel_velocity_driver(&w, &g[0], gamma);
            let r = cp_to_wheel_velocity_driver(&w, &g[1], gamma);
            prop_assert_eq!(l, -r);
        }

        #[test]
        fn linear_in_motion(
            a in -10.0f64..10.0, b in -10.0f64..10.0,
            w1 in -1.0f64..1.0, w2 in -1.0f64..1.0, gamma in 0.0f64..10.0
        ) {
            let r = sample_geometry()[2];
            let v1 = Vector3::new(a, 0.3, 0.0);
            let v2 = Vector3::new(b, -0.2, 0.0);
            let o1 = Vector3::new(0.0, 0.0, w1);
            let o2 = Vector3::new(0.0, 0.0, w2);
            let sum = cp_to_wheel_velocity(&(v1 + v2), &(o1 + o2), &r, gamma);
            let parts = cp_to_wheel_velocity(&v1, &o1, &r, gamma) + cp_to_wheel_velocity(&v2, &o2, &r, gamma);
            prop_assert!((sum - parts).norm() < 1e-12);
        }

        #[test]
        fn arbitration_keeps_max_wheel_at_a_ref(
            a_ref in -5.0f64..5.0, l in proptest::array::uniform4(-2.0f64..2.0)
        ) {
            let out = traction_limit_adjust(a_ref, &l, &[0.2; 4], 0.15, 0.9);
            let k = (0..4).fold(0, |k, i| if l[i] > l[k] { i } else { k });
            prop_assert_eq!(out[k], a_ref);
            prop_assert!(out.iter().all(|&o| o <= a_ref + 1e-12));
        }
    }
}
