//! Closed-loop scenario runner.

use nalgebra::Vector3;
use thiserror::Error;

use super::config::{ControllerKind, Scenario};
use super::metrics::{compute_metrics, Metrics};
use super::trace::{standard_columns, Trace};
use crate::baseline::{AllocationError, BaselineController};
use crate::controller::{ControllerConfig, ControllerError, Measurements, TractionController};
use crate::transform::{cp_to_wheel_velocity, wheel_frame_velocity, wheel_steer, MotionReference};
use crate::vehicle::{Plant, PlantInput, SimError, VehicleState};
use crate::WHEELS;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RunError {
    #[error(transparent)]
    Diverged(#[from] SimError),
    #[error("t = {time} s: {source}")]
    Controller { time: f64, source: ControllerError },
    #[error("t = {time} s: {source}")]
    Allocation { time: f64, source: AllocationError },
}

impl RunError {
    pub fn time(&self) -> f64 {
        match self {
            RunError::Diverged(SimError::Diverged { time }) => *time,
            RunError::Controller { time, .. } | RunError::Allocation { time, .. } => *time,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub trace: Trace,
    pub metrics: Metrics,
}

enum Active {
    Proposed(TractionController),
    Baseline(BaselineController),
}

/// Per-sample controller signals that go into the trace.
#[derive(Default)]
struct Logged {
    torque_ref: [f64; WHEELS],
    lambda_ref: [f64; WHEELS],
    a_x_ref: [f64; WHEELS],
    a_lat: [f64; WHEELS],
    arbitration: bool,
    launch: bool,
}

/// Speeds beyond which the run is declared diverged even if finite.
const SPEED_LIMIT: f64 = 200.0;

pub fn initial_state(sc: &Scenario) -> VehicleState {
    let p = &sc.params;
    let init = &sc.cfg.initial;
    let mut s = VehicleState {
        v: Vector3::new(init.vx, init.vy, 0.0),
        omega: Vector3::new(0.0, 0.0, init.yaw_rate),
        ..Default::default()
    };
    let steer = wheel_steer(sc.steer(0.0));
    for i in 0..WHEELS {
        let vb = cp_to_wheel_velocity(&s.v, &s.omega, &p.vehicle.wheel_position(i), 0.0);
        let (vx, _) = wheel_frame_velocity(&vb, steer[i]);
        s.wheel_speed[i] = vx / p.tire.radius;
    }
    s
}

fn plant_input(sc: &Scenario, t: f64, torque_ref: [f64; WHEELS]) -> PlantInput {
    PlantInput {
        torque_ref,
        steer: sc.steer(t),
        mu: std::array::from_fn(|i| sc.mu(i, t)),
        eps: std::array::from_fn(|i| sc.eps(i, t)),
    }
}

/// Runs the scenario to completion and records one trace row per control
/// sample, including the final time.
pub fn run_scenario(sc: &Scenario) -> Result<RunResult, RunError> {
    let plant = Plant::new(sc.params.clone());
    let cfg = &sc.cfg;
    let ccfg = ControllerConfig::new(cfg.gains.clone(), &sc.params);
    let mut active = match cfg.controller {
        ControllerKind::Proposed => Active::Proposed(TractionController::new(ccfg)),
        ControllerKind::Baseline => {
            Active::Baseline(BaselineController::new(cfg.baseline.clone(), sc.params.clone(), ccfg))
        }
    };
    let ts = cfg.gains.ts;
    let dt = cfg.dt;
    let substeps = sc.substeps();
    let samples = sc.samples();
    let mut state = initial_state(sc);
    let mut trace = Trace::new(standard_columns());
    trace.rows.reserve(samples + 1);
    let mut command = [0.0; WHEELS];

    for k in 0..=samples {
        let t = k as f64 * ts;
        let input = plant_input(sc, t, command);
        let eval = plant.evaluate(&state, &input);
        let meas = Measurements {
            v: state.v,
            omega: state.omega,
            accel: eval.accel(),
            angular_accel: Vector3::new(0.0, 0.0, eval.yaw_accel()),
            wheel_speed: state.wheel_speed,
            steer: input.steer,
        };
        let refs = MotionReference {
            mode: cfg.mode,
            v_ref: sc.v_ref(t),
            a_ref: sc.a_ref(t),
            yaw_rate_ref: sc.yaw_rate_ref(t),
            gamma: cfg.gamma,
            steer: input.steer,
        };
        let logged = match &mut active {
            Active::Proposed(c) => {
                let o = c.update(&refs, &meas).map_err(|source| RunError::Controller { time: t, source })?;
                Logged {
                    torque_ref: o.torque_ref,
                    lambda_ref: o.lambda_ref,
                    a_x_ref: o.a_x_ref,
                    a_lat: o.a_lat,
                    arbitration: o.arbitration,
                    launch: o.launch,
                }
            }
            Active::Baseline(c) => {
                let fz = eval.wheels.map(|w| w.fz);
                let o = c.update(&refs, &meas, &fz).map_err(|source| RunError::Allocation { time: t, source })?;
                Logged { torque_ref: o.torque_ref, lambda_ref: o.lambda_est, ..Default::default() }
            }
        };
        command = logged.torque_ref;
        trace.rows.push(row(sc, t, &state, &refs, &eval, &input, &logged));
        if k == samples {
            break;
        }
        for j in 0..substeps {
            let tj = t + j as f64 * dt;
            let u = plant_input(sc, tj, command);
            state = plant.step(&state, &u, tj, dt)?;
            let too_fast = state.v.norm() > SPEED_LIMIT
                || state.wheel_speed.iter().any(|w| w.abs() * sc.params.tire.radius > SPEED_LIMIT);
            if too_fast {
                return Err(SimError::Diverged { time: tj + dt }.into());
            }
        }
    }
    let metrics = compute_metrics(&trace);
    Ok(RunResult { trace, metrics })
}

fn row(
    sc: &Scenario,
    t: f64,
    s: &VehicleState,
    refs: &MotionReference,
    eval: &crate::vehicle::Evaluation,
    input: &PlantInput,
    c: &Logged,
) -> Vec<f64> {
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    let mut r = vec![
        t,
        s.v.x,
        s.v.y,
        s.omega.z,
        refs.yaw_rate_ref,
        refs.v_ref,
        refs.a_ref,
        s.sideslip(),
        eval.accel().x,
        s.pose.x,
        s.pose.y,
        s.pose.yaw,
        input.steer,
        flag(c.arbitration),
        flag(c.launch),
    ];
    let domega = Vector3::new(0.0, 0.0, eval.yaw_accel());
    let steer = wheel_steer(input.steer);
    for i in 0..WHEELS {
        let pos = sc.params.vehicle.wheel_position(i);
        let a_pivot = cp_to_wheel_velocity(&eval.accel(), &domega, &pos, 0.0);
        let (ax_w, _) = wheel_frame_velocity(&a_pivot, steer[i]);
        let w = &eval.wheels[i];
        r.extend_from_slice(&[
            ax_w,
            c.a_x_ref[i],
            s.torque[i],
            c.torque_ref[i],
            w.slip,
            c.lambda_ref[i],
            input.eps[i],
            input.mu[i],
            w.fz,
            w.fx,
            s.wheel_speed[i],
            c.a_lat[i],
        ]);
    }
    r
}
