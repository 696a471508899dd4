//! Twin-track rigid-body plant.
//!
//! Newton-Euler equations at the centre point, four wheel spin states, four
//! actuator lags and a trace-only planar pose. Heave, roll and pitch are not
//! modelled: their derivatives are held at zero and load transfer is
//! quasi-static.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use thiserror::Error;

use crate::drivetrain::{actuator_lag_derivative, wheel_acceleration};
use crate::ode::rk4_step;
use crate::params::{PlantParams, VehicleParams};
use crate::tire;
use crate::transform::{cp_to_wheel_velocity, wheel_frame_velocity, wheel_steer, wheel_to_pivot};
use crate::WHEELS;

/// Length of the flat state vector.
pub const STATE_LEN: usize = 17;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("simulation diverged at t = {time} s")]
    Diverged { time: f64 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    /// Centre-point velocity, body frame.
    pub v: Vector3<f64>,
    /// Body angular rate; `omega.z` is the yaw rate.
    pub omega: Vector3<f64>,
    pub wheel_speed: [f64; WHEELS],
    pub torque: [f64; WHEELS],
    pub pose: Pose,
}

impl Default for VehicleState {
    fn default() -> Self {
        VehicleState {
            v: Vector3::zeros(),
            omega: Vector3::zeros(),
            wheel_speed: [0.0; WHEELS],
            torque: [0.0; WHEELS],
            pose: Pose::default(),
        }
    }
}

impl VehicleState {
    /// Straight-line rolling at `vx` with free-rolling wheels.
    pub fn rolling(vx: f64, radius: f64) -> Self {
        VehicleState {
            v: Vector3::new(vx, 0.0, 0.0),
            wheel_speed: [vx / radius; WHEELS],
            ..Default::default()
        }
    }

    pub fn to_array(&self) -> [f64; STATE_LEN] {
        let mut x = [0.0; STATE_LEN];
        x[0..3].copy_from_slice(self.v.as_slice());
        x[3..6].copy_from_slice(self.omega.as_slice());
        x[6..10].copy_from_slice(&self.wheel_speed);
        x[10..14].copy_from_slice(&self.torque);
        x[14] = self.pose.x;
        x[15] = self.pose.y;
        x[16] = self.pose.yaw;
        x
    }

    pub fn from_array(x: &[f64; STATE_LEN]) -> Self {
        VehicleState {
            v: Vector3::new(x[0], x[1], x[2]),
            omega: Vector3::new(x[3], x[4], x[5]),
            wheel_speed: [x[6], x[7], x[8], x[9]],
            torque: [x[10], x[11], x[12], x[13]],
            pose: Pose { x: x[14], y: x[15], yaw: x[16] },
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Sideslip angle at the centre point.
    pub fn sideslip(&self) -> f64 {
        if self.v.x.abs() < 1e-9 && self.v.y.abs() < 1e-9 {
            0.0
        } else {
            self.v.y.atan2(self.v.x.abs())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceMoment {
    pub f: Vector3<f64>,
    pub t: Vector3<f64>,
}

impl ForceMoment {
    pub fn zero() -> Self {
        ForceMoment { f: Vector3::zeros(), t: Vector3::zeros() }
    }
}

/// Normal loads in wheel order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WheelLoadSet(pub [f64; WHEELS]);

impl WheelLoadSet {
    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// Inputs held constant over one integration step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantInput {
    pub torque_ref: [f64; WHEELS],
    pub steer: f64,
    pub mu: [f64; WHEELS],
    pub eps: [f64; WHEELS],
}

impl PlantInput {
    pub fn coasting(mu: f64) -> Self {
        PlantInput { torque_ref: [0.0; WHEELS], steer: 0.0, mu: [mu; WHEELS], eps: [1.0; WHEELS] }
    }
}

/// Per-wheel quantities evaluated alongside the derivative.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WheelDiag {
    pub slip: f64,
    pub slip_angle: f64,
    /// Traction force in the wheel frame.
    pub fx: f64,
    pub fy: f64,
    pub fz: f64,
    /// Longitudinal pivot velocity in the wheel frame.
    pub vx_wheel: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub deriv: [f64; STATE_LEN],
    pub wheels: [WheelDiag; WHEELS],
    /// Body-frame specific force from tires and aero, drives load transfer.
    pub specific_force: Vector2<f64>,
    pub force_moment: ForceMoment,
}

impl Evaluation {
    /// Time derivative of the body-frame velocity.
    pub fn accel(&self) -> Vector3<f64> {
        Vector3::new(self.deriv[0], self.deriv[1], self.deriv[2])
    }

    pub fn yaw_accel(&self) -> f64 {
        self.deriv[5]
    }
}

/// Aerodynamic and rolling resistance, already signed to oppose motion.
pub fn aero_resistance(v: &Vector3<f64>, p: &VehicleParams) -> ForceMoment {
    let k = -0.5 * p.drag_coefficient * p.air_density * p.frontal_area * v.x.hypot(v.y);
    let f = Vector3::new(k * v.x, k * v.y, 0.0);
    ForceMoment { f, t: p.aero_center_vector().cross(&f) }
}

/// Gravity in the body frame for a road pitched by `road_grade`.
pub fn gravity_force(p: &VehicleParams) -> Vector3<f64> {
    let (s, c) = p.road_grade.sin_cos();
    p.mass * p.gravity * Vector3::new(-s, 0.0, -c)
}

/// Total force and moment at the centre point from pivot-frame wheel forces,
/// gravity and the given aero contribution.
pub fn sum_wheel_forces(
    wheel_forces: &[Vector3<f64>; WHEELS],
    aero: &ForceMoment,
    p: &VehicleParams,
) -> ForceMoment {
    let mut f = gravity_force(p) + aero.f;
    let mut t = aero.t;
    for (i, fw) in wheel_forces.iter().enumerate() {
        f += fw;
        t += p.wheel_position(i).cross(fw);
    }
    ForceMoment { f, t }
}

/// Newton-Euler derivatives of body velocity and angular rate.
pub fn rigid_body_derivatives(
    v: &Vector3<f64>,
    omega: &Vector3<f64>,
    fm: &ForceMoment,
    mass: f64,
    inertia: &Matrix3<f64>,
    inertia_inv: &Matrix3<f64>,
) -> (Vector3<f64>, Vector3<f64>) {
    let dv = fm.f / mass - omega.cross(v);
    let dw = inertia_inv * (fm.t - omega.cross(&(inertia * omega)));
    (dv, dw)
}

/// Static load per wheel plus the sensitivities of each load to the
/// longitudinal and lateral specific force, before clamping.
fn load_model(p: &VehicleParams) -> ([f64; WHEELS], [f64; WHEELS], [f64; WHEELS]) {
    let pos = &p.wheel_positions;
    let x_front = 0.5 * (pos[0][0] + pos[1][0]);
    let x_rear = 0.5 * (pos[2][0] + pos[3][0]);
    let l = x_front - x_rear;
    let weight = p.mass * p.gravity * p.road_grade.cos();
    let axle = [weight * (-x_rear) / l, weight * x_front / l];
    let track = [p.front_track(), p.rear_track()];
    let mut s = [0.0; WHEELS];
    let mut kx = [0.0; WHEELS];
    let mut ky = [0.0; WHEELS];
    for i in 0..WHEELS {
        let k = i / 2;
        let side = if pos[i][1] > 0.0 { 1.0 } else { -1.0 };
        s[i] = 0.5 * axle[k];
        kx[i] = if k == 0 { -0.5 } else { 0.5 } * p.mass * p.cg_height / l;
        ky[i] = -side * (axle[k] / weight) * p.mass * p.cg_height / track[k];
    }
    (s, kx, ky)
}

/// Quasi-static normal loads for a body-frame specific force `a`.
pub fn normal_loads(a: &Vector2<f64>, p: &VehicleParams) -> WheelLoadSet {
    let (s, kx, ky) = load_model(p);
    WheelLoadSet(std::array::from_fn(|i| (s[i] + kx[i] * a.x + ky[i] * a.y).max(0.0)))
}

/// The plant with cached inertia inverse and load-transfer coefficients.
#[derive(Debug, Clone)]
pub struct Plant {
    pub params: PlantParams,
    inertia: Matrix3<f64>,
    inertia_inv: Matrix3<f64>,
    loads: ([f64; WHEELS], [f64; WHEELS], [f64; WHEELS]),
}

impl Plant {
    /// Panics on invalid parameters; call `PlantParams::validate` first when
    /// the parameters come from user input.
    pub fn new(params: PlantParams) -> Self {
        params.validate().expect("invalid plant parameters");
        let inertia = params.vehicle.inertia_matrix();
        let inertia_inv = inertia.try_inverse().expect("inertia checked positive definite");
        let loads = load_model(&params.vehicle);
        Plant { params, inertia, inertia_inv, loads }
    }

    pub fn reference() -> Self {
        Plant::new(PlantParams::reference())
    }

    /// Tire kinematics for every wheel: `(slip, slip angle, vx in wheel frame)`.
    pub fn wheel_kinematics(&self, s: &VehicleState, steer: f64) -> [(f64, f64, f64); WHEELS] {
        let p = &self.params;
        let deltas = wheel_steer(steer);
        std::array::from_fn(|i| {
            let vb = cp_to_wheel_velocity(&s.v, &s.omega, &p.vehicle.wheel_position(i), 0.0);
            let (vx, vy) = wheel_frame_velocity(&vb, deltas[i]);
            let slip = tire::slip_ratio_floored(s.wheel_speed[i], p.tire.radius, vx, p.slip_speed_floor);
            let alpha = tire::slip_angle_floored(vx, vy, p.slip_speed_floor);
            (slip, alpha, vx)
        })
    }

    /// Full derivative plus per-wheel diagnostics.
    pub fn evaluate(&self, s: &VehicleState, u: &PlantInput) -> Evaluation {
        let p = &self.params;
        let vp = &p.vehicle;
        let kin = self.wheel_kinematics(s, u.steer);
        let deltas = wheel_steer(u.steer);

        // Tire forces per unit load, in the pivot frame. The ellipse is
        // homogeneous in load, so this is exact before loads are known.
        let unit: [(f64, f64, f64, f64); WHEELS] = std::array::from_fn(|i| {
            let (slip, alpha, _) = kin[i];
            let fx = tire::pacejka_longitudinal(slip, 1.0, u.mu[i], u.eps[i], &p.tire);
            let lat_scale = if p.eps_scales_lateral { u.eps[i] } else { 1.0 };
            let fy = lat_scale * tire::pacejka_lateral(alpha, 1.0, u.mu[i], &p.tire);
            let (fx, fy) = tire::friction_ellipse(fx, fy, 1.0, u.mu[i], &p.tire);
            let (bx, by) = wheel_to_pivot(fx, fy, deltas[i]);
            (fx, fy, bx, by)
        });

        // Loads depend on the specific force, which is linear in the loads.
        let aero = aero_resistance(&s.v, vp);
        let (st, kx, ky) = &self.loads;
        let mut m = Matrix2::identity() * vp.mass;
        let mut rhs = Vector2::new(aero.f.x, aero.f.y);
        for i in 0..WHEELS {
            let b = Vector2::new(unit[i].2, unit[i].3);
            rhs += b * st[i];
            m -= b * nalgebra::RowVector2::new(kx[i], ky[i]);
        }
        let a_spec = m.lu().solve(&rhs).unwrap_or_else(|| rhs / vp.mass);
        let loads = normal_loads(&a_spec, vp);

        let mut wheels = [WheelDiag::default(); WHEELS];
        let mut pivot_forces = [Vector3::zeros(); WHEELS];
        for i in 0..WHEELS {
            let fz = loads.0[i];
            let (fx, fy, bx, by) = unit[i];
            wheels[i] = WheelDiag {
                slip: kin[i].0,
                slip_angle: kin[i].1,
                fx: fx * fz,
                fy: fy * fz,
                fz,
                vx_wheel: kin[i].2,
            };
            pivot_forces[i] = Vector3::new(bx * fz, by * fz, fz);
        }
        let fm = sum_wheel_forces(&pivot_forces, &aero, vp);
        let (mut dv, mut dw) =
            rigid_body_derivatives(&s.v, &s.omega, &fm, vp.mass, &self.inertia, &self.inertia_inv);
        dv.z = 0.0;
        dw.x = 0.0;
        dw.y = 0.0;

        let mut d = [0.0; STATE_LEN];
        d[0..3].copy_from_slice(dv.as_slice());
        d[3..6].copy_from_slice(dw.as_slice());
        let dt = &p.drivetrain;
        for i in 0..WHEELS {
            d[6 + i] = wheel_acceleration(s.torque[i], -wheels[i].fx, s.wheel_speed[i], dt);
            let tau_ref = dt.clamp_torque(u.torque_ref[i]);
            d[10 + i] = actuator_lag_derivative(s.torque[i], tau_ref, dt.time_constant);
        }
        let (sy, cy) = s.pose.yaw.sin_cos();
        d[14] = s.v.x * cy - s.v.y * sy;
        d[15] = s.v.x * sy + s.v.y * cy;
        d[16] = s.omega.z;
        Evaluation { deriv: d, wheels, specific_force: a_spec, force_moment: fm }
    }

    pub fn derivative(&self, s: &VehicleState, u: &PlantInput) -> [f64; STATE_LEN] {
        self.evaluate(s, u).deriv
    }

    /// One RK4 step with inputs held. `t` is only used to stamp errors.
    pub fn step(
        &self,
        s: &VehicleState,
        u: &PlantInput,
        t: f64,
        dt: f64,
    ) -> Result<VehicleState, SimError> {
        let x = s.to_array();
        let next = rk4_step(&x, dt, |x| self.derivative(&VehicleState::from_array(x), u));
        if next.iter().all(|v| v.is_finite()) {
            Ok(VehicleState::from_array(&next))
        } else {
            Err(SimError::Diverged { time: t + dt })
        }
    }
}
