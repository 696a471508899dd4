//! Least-squares traction force allocation, used as the comparison baseline.
//!
//! The allocator distributes a total force and yaw moment over the wheels by
//! minimising the sum of squared friction utilisations. It knows the true
//! normal loads and the nominal friction coefficient, but has no slip
//! feedback and no knowledge of surface changes.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::pid::pi_step;
use crate::controller::{measured_slip, ControllerConfig, Measurements, PiGains, PiState};
use crate::drivetrain::resistive_torque;
use crate::params::PlantParams;
use crate::tire::linear_tire_stiffness;
use crate::transform::{cp_to_wheel_velocity, wheel_frame_velocity, wheel_steer, Mode, MotionReference};
use crate::vehicle::aero_resistance;
use crate::WHEELS;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AllocationError {
    #[error("allocation infeasible: constraint matrix is rank deficient")]
    RankDeficient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationProblem {
    pub f_total: f64,
    pub m_z: f64,
    pub fz: [f64; WHEELS],
    pub mu: [f64; WHEELS],
    pub r_y: [f64; WHEELS],
    /// Largest admissible |F_x| per wheel.
    pub bounds: [f64; WHEELS],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub forces: [f64; WHEELS],
    pub clamped: [bool; WHEELS],
    /// Total-force constraint violation after clamping (N).
    pub force_residual: f64,
    /// Yaw-moment constraint violation after clamping (N m).
    pub moment_residual: f64,
}

/// Weighted minimum-norm solution over the wheels in `free`, for right-hand
/// side `b`. Also returns the multipliers.
fn weighted_min_norm(
    prob: &AllocationProblem,
    free: &[bool; WHEELS],
    b: Vector2<f64>,
) -> Result<([f64; WHEELS], Vector2<f64>), AllocationError> {
    let winv: [f64; WHEELS] = std::array::from_fn(|i| {
        if free[i] {
            (prob.mu[i] * prob.fz[i]).max(0.0).powi(2)
        } else {
            0.0
        }
    });
    let col = |i: usize| Vector2::new(1.0, -prob.r_y[i]);
    let mut s = Matrix2::zeros();
    for i in 0..WHEELS {
        s += winv[i] * col(i) * col(i).transpose();
    }
    let scale = s.trace();
    if !(scale > 0.0) || s.determinant().abs() <= 1e-12 * scale * scale {
        return Err(AllocationError::RankDeficient);
    }
    let nu = s.try_inverse().ok_or(AllocationError::RankDeficient)? * b;
    Ok((std::array::from_fn(|i| winv[i] * col(i).dot(&nu)), nu))
}

/// Minimises `sum (F_i / (mu_i Fz_i))^2` subject to the total force and yaw
/// moment, then clamps each wheel to its bound and reports the residual.
pub fn allocate_least_squares(prob: &AllocationProblem) -> Result<Allocation, AllocationError> {
    let b = Vector2::new(prob.f_total, prob.m_z);
    let (raw, _) = weighted_min_norm(prob, &[true; WHEELS], b)?;
    Ok(finish(prob, raw))
}

/// Variant that re-solves over the unclamped wheels until the clamp set is
/// stable, for fairness studies.
pub fn allocate_iterated(prob: &AllocationProblem) -> Result<Allocation, AllocationError> {
    let b = Vector2::new(prob.f_total, prob.m_z);
    let (mut forces, _) = weighted_min_norm(prob, &[true; WHEELS], b)?;
    let mut free = [true; WHEELS];
    for _ in 0..WHEELS {
        let mut changed = false;
        for i in 0..WHEELS {
            if free[i] && forces[i].abs() > prob.bounds[i] {
                free[i] = false;
                forces[i] = forces[i].clamp(-prob.bounds[i], prob.bounds[i]);
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut rest = b;
        for i in (0..WHEELS).filter(|&i| !free[i]) {
            rest -= Vector2::new(forces[i], -prob.r_y[i] * forces[i]);
        }
        match weighted_min_norm(prob, &free, rest) {
            Ok((sub, _)) => {
                for i in (0..WHEELS).filter(|&i| free[i]) {
                    forces[i] = sub[i];
                }
            }
            Err(_) => break,
        }
    }
    Ok(finish(prob, forces))
}

fn finish(prob: &AllocationProblem, raw: [f64; WHEELS]) -> Allocation {
    let mut clamped = [false; WHEELS];
    let forces: [f64; WHEELS] = std::array::from_fn(|i| {
        let f = raw[i].clamp(-prob.bounds[i], prob.bounds[i]);
        clamped[i] = f != raw[i];
        f
    });
    let total: f64 = forces.iter().sum();
    let moment: f64 = (0..WHEELS).map(|i| -prob.r_y[i] * forces[i]).sum();
    Allocation {
        forces,
        clamped,
        force_residual: total - prob.f_total,
        moment_residual: moment - prob.m_z,
    }
}

/// Stationarity residual `max |F_i / (mu Fz)^2 - (A^T nu)_i|` of an
/// unclamped solution, scaled by the largest weighted force.
pub fn kkt_residual(prob: &AllocationProblem, forces: &[f64; WHEELS]) -> f64 {
    let b = Vector2::new(prob.f_total, prob.m_z);
    let Ok((_, nu)) = weighted_min_norm(prob, &[true; WHEELS], b) else {
        return f64::INFINITY;
    };
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 0..WHEELS {
        let w = (prob.mu[i] * prob.fz[i]).powi(2);
        if w == 0.0 {
            continue;
        }
        let g = forces[i] / w;
        let a = Vector2::new(1.0, -prob.r_y[i]).dot(&nu);
        worst = worst.max((g - a).abs());
        scale = scale.max(g.abs());
    }
    worst / scale.max(f64::MIN_POSITIVE)
}

/// Torque feedforward for an allocated force: steady wheel balance with the
/// slip estimated from the linear part of the slip curve.
/// Returns `(torque, estimated slip)`.
pub fn force_to_torque(fx: f64, fz: f64, mu: f64, vx_wheel: f64, p: &PlantParams) -> (f64, f64) {
    let c = linear_tire_stiffness(&p.tire);
    let cap = fz * mu * c;
    let lambda = if cap > 0.0 { (fx / cap).clamp(-0.99, 0.99) } else { 0.0 };
    let v = vx_wheel.abs();
    let wr = if lambda >= 0.0 { v / (1.0 - lambda) } else { v * (1.0 + lambda) };
    let omega = wr * vx_wheel.signum() / p.tire.radius;
    (fx * p.tire.radius - resistive_torque(omega, &p.drivetrain), lambda)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineGains {
    /// Speed loop gain in self-driving mode (1/s).
    pub velocity_kp: f64,
    /// Yaw-rate PI producing the yaw moment demand (N m per rad/s).
    pub yaw: PiGains,
    pub moment_limit: f64,
    pub iterate_clamping: bool,
}

impl Default for BaselineGains {
    fn default() -> Self {
        BaselineGains {
            velocity_kp: 8.0,
            yaw: PiGains { kp: 1500.0, ki: 6000.0 },
            moment_limit: 3000.0,
            iterate_clamping: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BaselineOutput {
    pub torque_ref: [f64; WHEELS],
    pub forces: [f64; WHEELS],
    pub lambda_est: [f64; WHEELS],
    pub lambda_meas: [f64; WHEELS],
    pub m_z: f64,
}

/// Baseline controller: demands from the references, allocation, then
/// open-loop torque feedforward.
#[derive(Debug, Clone)]
pub struct BaselineController {
    pub gains: BaselineGains,
    pub params: PlantParams,
    pub cfg: ControllerConfig,
    pub ts: f64,
    yaw: PiState,
}

impl BaselineController {
    pub fn new(gains: BaselineGains, params: PlantParams, cfg: ControllerConfig) -> Self {
        let ts = cfg.gains.ts;
        BaselineController { gains, params, cfg, ts, yaw: PiState::default() }
    }

    pub fn update(
        &mut self,
        refs: &MotionReference,
        meas: &Measurements,
        fz: &[f64; WHEELS],
    ) -> Result<BaselineOutput, AllocationError> {
        let p = &self.params;
        let m = p.vehicle.mass;
        let a_dem = match refs.mode {
            Mode::SelfDriving => self.gains.velocity_kp * (refs.v_ref - meas.v.x),
            Mode::DriverInLoop => refs.a_ref,
        };
        let drag = aero_resistance(&meas.v, &p.vehicle).f.x;
        let f_total = m * a_dem - drag;
        let lim = self.gains.moment_limit;
        let m_z = pi_step(refs.yaw_rate_ref, meas.omega.z, &mut self.yaw, &self.gains.yaw, self.ts, -lim, lim);
        let mu = [p.tire.mu; WHEELS];
        let bounds: [f64; WHEELS] = std::array::from_fn(|i| mu[i] * fz[i] * p.tire.longitudinal.d);
        let prob = AllocationProblem {
            f_total,
            m_z,
            fz: *fz,
            mu,
            r_y: std::array::from_fn(|i| p.vehicle.wheel_positions[i][1]),
            bounds,
        };
        let alloc = if self.gains.iterate_clamping {
            allocate_iterated(&prob)?
        } else {
            allocate_least_squares(&prob)?
        };
        let deltas = wheel_steer(meas.steer);
        let mut out = BaselineOutput { m_z, forces: alloc.forces, ..Default::default() };
        for i in 0..WHEELS {
            let vb = cp_to_wheel_velocity(&meas.v, &meas.omega, &self.cfg.wheel_positions[i], 0.0);
            let (vx, _) = wheel_frame_velocity(&vb, deltas[i]);
            let (tau, lam) = force_to_torque(alloc.forces[i], fz[i], mu[i], vx, p);
            out.torque_ref[i] = p.drivetrain.clamp_torque(tau);
            out.lambda_est[i] = lam;
        }
        out.lambda_meas = measured_slip(meas, &self.cfg);
        Ok(out)
    }
}
