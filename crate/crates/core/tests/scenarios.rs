//! Closed-loop behaviour of the shipped scenarios and the controller modes.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use traction_core::controller::{ControllerConfig, ControllerGains, Measurements, TractionController};
use traction_core::harness::config::{load_config, parse_config, ConfigError, Scenario};
use traction_core::harness::metrics::rms;
use traction_core::harness::{compare_runs, emit_plots, run_many, run_scenario, Trace};
use traction_core::params::PlantParams;
use traction_core::transform::{Mode, MotionReference};
use traction_core::vehicle::{Plant, PlantInput, VehicleState};
use traction_core::WHEELS;

fn scenario_files() -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    v.sort();
    v
}

fn load(name: &str) -> Scenario {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    load_config(&dir.join(format!("{name}.toml"))).unwrap()
}

#[test]
fn every_shipped_scenario_terminates() {
    let scs: Vec<Scenario> = scenario_files().iter().map(|f| load_config(f).unwrap()).collect();
    assert!(scs.len() >= 5);
    for (sc, r) in scs.iter().zip(run_many(&scs)) {
        let r = r.unwrap_or_else(|e| panic!("{}: {e}", sc.cfg.name));
        assert_eq!(r.trace.rows.len(), sc.samples() + 1, "{}", sc.cfg.name);
        assert!(r.trace.rows.iter().flatten().all(|v| v.is_finite()), "{}", sc.cfg.name);
    }
}

#[test]
fn yaw_error_never_grows_with_gamma() {
    let family: Vec<Scenario> = scenario_files()
        .iter()
        .map(|f| load_config(f).unwrap())
        .filter(|s| s.cfg.lane_change.is_some())
        .collect();
    let gammas = [0.0, 2.0, 5.0, 10.0];
    let runs: Vec<Scenario> = family
        .iter()
        .flat_map(|s| {
            gammas.iter().map(move |&g| {
                let mut c = s.clone();
                c.cfg.gamma = g;
                c
            })
        })
        .collect();
    let res = run_many(&runs);
    for (k, sc) in family.iter().enumerate() {
        let yaw: Vec<f64> = (0..gammas.len()).map(|j| res[k * gammas.len() + j].as_ref().unwrap().metrics.yaw_rate_rms).collect();
        for w in yaw.windows(2) {
            assert!(w[1] <= w[0], "{}: {yaw:?}", sc.cfg.name);
        }
    }
}

#[test]
fn zero_reference_at_rest_stays_at_rest() {
    let r = run_scenario(&load("zero_reference")).unwrap();
    for col in ["vx", "vy", "yaw_rate", "x", "y"] {
        assert!(r.trace.column(col).iter().all(|v| v.abs() < 1e-12), "{col}");
    }
    for w in 0..WHEELS {
        assert!(r.trace.wheel_column("tau", w).iter().all(|v| *v == 0.0));
    }
}

#[test]
fn launch_from_standstill_hands_over_to_slip_control() {
    let text = r#"
        name = "launch"
        duration = 4.0
        mode = "driver_in_loop"
        [timelines]
        a_ref = [{ from = 0.0, to = 4.0, value = 3.0 }]
    "#;
    let sc = Scenario::new(parse_config(text).unwrap(), None).unwrap();
    let r = run_scenario(&sc).unwrap();
    let launch = r.trace.column("launch");
    let vx = r.trace.column("vx");
    assert_eq!(launch[0], 1.0);
    assert_eq!(*launch.last().unwrap(), 0.0);
    let handover = launch.iter().position(|&f| f == 0.0).unwrap();
    assert!(vx[handover] > 2.0 && vx[handover] < 2.5, "{}", vx[handover]);
    assert!(*vx.last().unwrap() > 9.0);
    assert!(r.metrics.max_slip() < 0.17);
}

/// Runs a straight line with the controller in the given mode; in driver
/// mode the acceleration demand is the speed loop's output computed here.
fn straight_line_torques(mode: Mode) -> Vec<[f64; WHEELS]> {
    let p = PlantParams::reference();
    let plant = Plant::new(p.clone());
    let gains = ControllerGains::default();
    let mut ctl = TractionController::new(ControllerConfig::new(gains.clone(), &p));
    let mut s = VehicleState::rolling(10.0, p.tire.radius);
    let mut cmd = [0.0; WHEELS];
    let mut out = Vec::new();
    for k in 0..600 {
        let t = k as f64 * gains.ts;
        let v_ref = 10.0 + 0.5 * t;
        let u = PlantInput { torque_ref: cmd, steer: 0.0, mu: [1.0; WHEELS], eps: [1.0, 0.8, 1.0, 1.1] };
        let e = plant.evaluate(&s, &u);
        let meas = Measurements {
            v: s.v,
            omega: s.omega,
            accel: e.accel(),
            angular_accel: Vector3::new(0.0, 0.0, e.yaw_accel()),
            wheel_speed: s.wheel_speed,
            steer: 0.0,
        };
        let refs = MotionReference {
            mode,
            v_ref,
            a_ref: gains.velocity_kp * (v_ref - s.v.x),
            yaw_rate_ref: 0.0,
            gamma: 0.0,
            steer: 0.0,
        };
        cmd = ctl.update(&refs, &meas).unwrap().torque_ref;
        out.push(cmd);
        for j in 0..10 {
            s = plant.step(&s, &u_with(cmd, &u), t + j as f64 * 1e-3, 1e-3).unwrap();
        }
    }
    out
}

fn u_with(cmd: [f64; WHEELS], u: &PlantInput) -> PlantInput {
    PlantInput { torque_ref: cmd, ..*u }
}

#[test]
fn driver_mode_reproduces_self_driving_on_a_straight_line() {
    let a = straight_line_torques(Mode::SelfDriving);
    let b = straight_line_torques(Mode::DriverInLoop);
    let diff = rms(a.iter().zip(&b).flat_map(|(x, y)| (0..WHEELS).map(move |i| x[i] - y[i])));
    let scale = rms(a.iter().flat_map(|x| x.iter().copied()));
    assert!(scale > 1.0);
    assert!(diff <= 0.02 * scale, "diff {diff} scale {scale}");
}

#[test]
fn trace_files_round_trip_and_plots_render() {
    let r = run_scenario(&load("lane_change_80")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    r.trace.write_file(&path).unwrap();
    let back = Trace::read_file(&path).unwrap();
    assert_eq!(back, r.trace);
    assert_eq!(back.sha256_hex(), r.trace.sha256_hex());
    let files = emit_plots(&r.trace, dir.path()).unwrap();
    assert_eq!(files.len(), 2);
    assert!(files.iter().all(|f| std::fs::metadata(f).unwrap().len() > 1000));
}

#[test]
fn comparison_prefers_gamma_ten_on_yaw() {
    let sc = load("lane_change_95");
    let mut g0 = sc.clone();
    g0.cfg.gamma = 0.0;
    let (a, b) = (run_scenario(&g0).unwrap(), run_scenario(&sc).unwrap());
    let c = compare_runs(&[&a.trace, &b.trace]).unwrap();
    assert_eq!(c.row("yaw_rate_rms").unwrap().winner, 1);
    assert_eq!(c.row("max_abs_beta").unwrap().winner, 1);
}

#[test]
fn invalid_files_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "name = \"x\"\nduration = 1.0\nmode = \"sideways\"\n").unwrap();
    assert!(matches!(load_config(&bad), Err(ConfigError::Schema { .. })));
    assert!(matches!(load_config(&dir.path().join("missing.toml")), Err(ConfigError::Io { .. })));
}
