//! Acceptance suite. Each criterion prints one PASS/FAIL line; the test
//! fails if any criterion fails.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use traction_core::analysis::{
    closed_loop_spectrum, linearize, linearize_system, spectral_radius, trim_at_slip, wheel_eigenvalue_at,
    wheel_mode_sign_change, DEFAULT_STEP, REFERENCE_SPEED,
};
use traction_core::controller::ControllerGains;
use traction_core::harness::config::{load_config, ControllerKind, Scenario};
use traction_core::harness::metrics::{mean_between, rms_error_between};
use traction_core::harness::{run_many, run_scenario, Trace};
use traction_core::ode::rk4_step;
use traction_core::params::PlantParams;
use traction_core::tire::{ellipse_usage, friction_ellipse, pacejka_longitudinal, slip_curve_peak};
use traction_core::transform::{cp_to_wheel_velocity, reconstruct_planar};
use traction_core::vehicle::{rigid_body_derivatives, ForceMoment, Plant, PlantInput, VehicleState};
use traction_core::{WHEELS, WHEEL_NAMES};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn scenario_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn shipped() -> Vec<Scenario> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(scenario_dir())
        .expect("scenarios directory")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    files.sort();
    files.iter().map(|f| load_config(f).unwrap_or_else(|e| panic!("{}: {e}", f.display()))).collect()
}

fn named(name: &str) -> Scenario {
    load_config(&scenario_dir().join(format!("{name}.toml"))).unwrap()
}

fn with_gamma(sc: &Scenario, gamma: f64) -> Scenario {
    let mut s = sc.clone();
    s.cfg.gamma = gamma;
    s
}

fn transformation_uniqueness() -> Outcome {
    let p = PlantParams::reference();
    let r = p.vehicle.wheel_position_vectors();
    let mut rng = StdRng::seed_from_u64(7);
    let triples = [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]];
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let v = Vector3::new(rng.random_range(-40.0..40.0), rng.random_range(-10.0..10.0), 0.0);
        let w = Vector3::new(0.0, 0.0, rng.random_range(-3.0..3.0));
        let vb: Vec<Vector3<f64>> = r.iter().map(|ri| cp_to_wheel_velocity(&v, &w, ri, 0.0)).collect();
        for t in triples {
            let Some((vx, vy, wz)) = reconstruct_planar(t.map(|i| (r[i], vb[i]))) else {
                return outcome(false, format!("wheels {t:?} are degenerate"));
            };
            worst = worst.max((vx - v.x).abs()).max((vy - v.y).abs()).max((wz - w.z).abs());
        }
    }
    outcome(worst <= 1e-9, format!("max reconstruction error {worst:.2e} over 1000 motions x 4 triples"))
}

fn slip_limit() -> Outcome {
    let g = ControllerGains::default();
    let bound = g.lambda_max + 0.02;
    let scenarios: Vec<Scenario> = shipped()
        .into_iter()
        .map(|mut s| {
            s.cfg.controller = ControllerKind::Proposed;
            s
        })
        .collect();
    let mut worst = (0.0f64, String::new());
    for (sc, res) in scenarios.iter().zip(run_many(&scenarios)) {
        let run = match res {
            Ok(r) => r,
            Err(e) => return outcome(false, format!("{} failed: {e}", sc.cfg.name)),
        };
        if sc.cfg.gains.lambda_max != g.lambda_max {
            return outcome(false, format!("{} overrides lambda_max", sc.cfg.name));
        }
        let m = run.metrics.max_slip();
        if m > worst.0 {
            worst = (m, sc.cfg.name.clone());
        }
    }
    outcome(
        worst.0 <= bound,
        format!("max |lambda| {:.4} ({}) against bound {bound:.2} over {} scenarios", worst.0, worst.1, scenarios.len()),
    )
}

fn stability_dichotomy() -> Outcome {
    let p = PlantParams::reference();
    let (peak, _) = slip_curve_peak(&p.tire, 1.0, 1.0).unwrap();
    let mut notes = Vec::new();
    let mut pass = true;
    for w in 0..WHEELS {
        let stable = wheel_eigenvalue_at(0.05, REFERENCE_SPEED, &p, w);
        let unstable = wheel_eigenvalue_at(0.3, REFERENCE_SPEED, &p, w);
        let flip = wheel_mode_sign_change(REFERENCE_SPEED, &p, w, (0.05, 0.3), 1e-6);
        match (stable, unstable, flip) {
            (Ok(s), Ok(u), Ok(f)) => {
                let ok = s < 0.0 && u > 0.0 && (f - peak).abs() <= 1e-3;
                pass &= ok;
                notes.push(format!("{} {s:.2}/{u:.3} flip {f:.5}", WHEEL_NAMES[w]));
            }
            (s, u, f) => {
                pass = false;
                notes.push(format!("{} error {:?} {:?} {:?}", WHEEL_NAMES[w], s.err(), u.err(), f.err()));
            }
        }
    }
    outcome(pass, format!("peak {peak:.5}; {}", notes.join("; ")))
}

fn closed_loop_stabilization() -> Outcome {
    let p = PlantParams::reference();
    let plant = Plant::new(p.clone());
    let g = ControllerGains::default();
    let mut radii = Vec::new();
    for lam in [0.05, 0.3] {
        let op = match trim_at_slip(lam, REFERENCE_SPEED, &p) {
            Ok(op) => op,
            Err(e) => return outcome(false, format!("trim at {lam}: {e}")),
        };
        let lm = match linearize(&plant, &op, DEFAULT_STEP) {
            Ok(lm) => lm,
            Err(e) => return outcome(false, format!("linearize at {lam}: {e}")),
        };
        radii.push((lam, spectral_radius(&closed_loop_spectrum(&lm, &g))));
    }
    let pass = radii.iter().all(|&(_, r)| r < 1.0);
    let text: Vec<String> = radii.iter().map(|(l, r)| format!("rho({l}) = {r:.6}")).collect();
    outcome(pass, format!("Ts = {} s; {}", g.ts, text.join(", ")))
}

/// Maximal intervals on which some wheel has eps different from one.
fn eps_windows(sc: &Scenario) -> Vec<(f64, f64)> {
    let ts = sc.cfg.gains.ts;
    let n = sc.samples();
    let off = |k: usize| (0..WHEELS).any(|i| sc.eps(i, k as f64 * ts) != 1.0);
    let mut out = Vec::new();
    let mut start = None;
    for k in 0..=n {
        match (off(k), start) {
            (true, None) => start = Some(k),
            (false, Some(s)) => {
                out.push((s as f64 * ts, (k - 1) as f64 * ts));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s as f64 * ts, n as f64 * ts));
    }
    out
}

fn eps_robustness() -> Outcome {
    let sc = named("eps_straight");
    let run = match run_scenario(&sc) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("run failed: {e}")),
    };
    let tr = &run.trace;
    let windows = eps_windows(&sc);
    if windows.is_empty() {
        return outcome(false, "scenario has no eps intervals");
    }
    let mut pass = true;
    let mut notes = Vec::new();
    for (a, b) in windows {
        let rms = rms_error_between(tr, "vx", "v_ref", a, b);
        // Steady part: last 40 % of the interval. With equal slip on every
        // wheel the force balance gives torque shares equal to eps*Fz shares.
        let s = b - 0.4 * (b - a);
        let tau: Vec<f64> = WHEEL_NAMES.iter().map(|w| mean_between(tr, &format!("tau_{w}"), s, b)).collect();
        let load: Vec<f64> = WHEEL_NAMES
            .iter()
            .map(|w| mean_between(tr, &format!("eps_{w}"), s, b) * mean_between(tr, &format!("fz_{w}"), s, b))
            .collect();
        let (st, sl) = (tau.iter().sum::<f64>(), load.iter().sum::<f64>());
        let dev = (0..WHEELS).map(|i| ((tau[i] / st) / (load[i] / sl) - 1.0).abs()).fold(0.0, f64::max);
        pass &= rms < 0.2 && dev <= 0.1;
        notes.push(format!("[{a:.2}, {b:.2}] vx rms {rms:.4}, worst share deviation {:.1} %", 100.0 * dev));
    }
    outcome(pass, notes.join("; "))
}

fn lane_change_family() -> Vec<Scenario> {
    shipped().into_iter().filter(|s| s.cfg.lane_change.is_some()).collect()
}

fn gamma_preference() -> Outcome {
    let family = lane_change_family();
    if family.is_empty() {
        return outcome(false, "no lane-change scenarios shipped");
    }
    let runs: Vec<Scenario> = family.iter().flat_map(|s| [with_gamma(s, 0.0), with_gamma(s, 10.0)]).collect();
    let results = run_many(&runs);
    let mut pass = true;
    let mut notes = Vec::new();
    for (k, sc) in family.iter().enumerate() {
        let (r0, r10) = (&results[2 * k], &results[2 * k + 1]);
        let Ok(r10) = r10 else {
            pass = false;
            notes.push(format!("{}: gamma 10 run failed", sc.cfg.name));
            continue;
        };
        // A gamma 0 run that leaves the road counts against gamma 0.
        let (y0, b0) = match r0 {
            Ok(r) => (r.metrics.yaw_rate_rms, r.metrics.max_abs_beta),
            Err(_) => (f64::INFINITY, f64::INFINITY),
        };
        let (y10, b10) = (r10.metrics.yaw_rate_rms, r10.metrics.max_abs_beta);
        pass &= y10 < y0 && b0 > b10;
        notes.push(format!("{}: yaw rms {y0:.4} -> {y10:.4}, max beta {b0:.4} -> {b10:.4}", sc.cfg.name));
    }
    outcome(pass, notes.join("; "))
}

fn baseline_comparison() -> Outcome {
    let sc = named("friction_bump_lane_change");
    let g = &sc.cfg.gains;
    let low: Vec<usize> = (0..WHEELS)
        .filter(|&i| (0..=sc.samples()).any(|k| sc.mu(i, k as f64 * g.ts) < sc.params.tire.mu))
        .collect();
    if low.is_empty() {
        return outcome(false, "no low-friction wheels in scenario");
    }
    let mut base = sc.clone();
    base.cfg.controller = ControllerKind::Baseline;
    let mut prop = sc.clone();
    prop.cfg.controller = ControllerKind::Proposed;
    let res = run_many(&[base, prop]);
    let (Ok(b), Ok(p)) = (&res[0], &res[1]) else {
        return outcome(false, format!("run failed: {:?} / {:?}", res[0].as_ref().err(), res[1].as_ref().err()));
    };
    let worst = |r: &traction_core::harness::RunResult| low.iter().map(|&i| r.metrics.max_abs_slip[i]).fold(0.0, f64::max);
    let (wb, wp) = (worst(b), worst(p));
    let pass = wb > g.lambda_max && wp <= g.lambda_max + 0.02;
    let names: Vec<&str> = low.iter().map(|&i| WHEEL_NAMES[i]).collect();
    outcome(pass, format!("low-mu wheels {names:?}: baseline max |lambda| {wb:.3}, proposed {wp:.3}"))
}

/// Empirical order of the plant integrator at the default step and twice
/// that step, against a fine reference.
fn plant_rk4_order() -> f64 {
    let plant = Plant::reference();
    let mut s0 = VehicleState::rolling(12.0, plant.params.tire.radius);
    s0.wheel_speed = s0.wheel_speed.map(|w| w * 1.03);
    s0.omega.z = 0.1;
    s0.v.y = 0.2;
    let u = PlantInput { torque_ref: [60.0, 40.0, 80.0, 50.0], steer: 0.03, mu: [1.0; WHEELS], eps: [1.0; WHEELS] };
    let run = |dt: f64| {
        let n = (0.2 / dt).round() as usize;
        let mut s = s0;
        for k in 0..n {
            s = plant.step(&s, &u, k as f64 * dt, dt).unwrap();
        }
        DVector::from_row_slice(&s.to_array())
    };
    let reference = run(0.2 / 3200.0);
    let e1 = (run(0.002) - &reference).norm();
    let e2 = (run(0.001) - &reference).norm();
    (e1 / e2).log2()
}

/// Relative drift of inertial linear momentum and of the angular momentum
/// norm for a free rigid body.
fn free_body_drift() -> (f64, f64) {
    let m = 300.0;
    let inertia = Matrix3::from_diagonal(&Vector3::new(50.0, 120.0, 140.0));
    let inv = inertia.try_inverse().unwrap();
    // State: body velocity, body rate, planar heading.
    let planar = |x: &[f64; 7]| {
        let (v, w) = (Vector3::new(x[0], x[1], x[2]), Vector3::new(x[3], x[4], x[5]));
        let (dv, dw) = rigid_body_derivatives(&v, &w, &ForceMoment::zero(), m, &inertia, &inv);
        [dv.x, dv.y, dv.z, dw.x, dw.y, dw.z, x[5]]
    };
    let inertial_p = |x: &[f64; 7]| {
        let (c, s) = (x[6].cos(), x[6].sin());
        Vector3::new(m * (c * x[0] - s * x[1]), m * (s * x[0] + c * x[1]), 0.0)
    };
    let mut x = [12.0, 1.5, 0.0, 0.0, 0.0, 0.8, 0.0];
    let p0 = inertial_p(&x);
    for _ in 0..5000 {
        x = rk4_step(&x, 1e-3, planar);
    }
    let dp = (inertial_p(&x) - p0).norm() / p0.norm();

    let spin = |x: &[f64; 6]| {
        let (v, w) = (Vector3::new(x[0], x[1], x[2]), Vector3::new(x[3], x[4], x[5]));
        let (dv, dw) = rigid_body_derivatives(&v, &w, &ForceMoment::zero(), m, &inertia, &inv);
        [dv.x, dv.y, dv.z, dw.x, dw.y, dw.z]
    };
    let mut y = [0.0, 0.0, 0.0, 0.3, -0.2, 0.5];
    let h = |y: &[f64; 6]| (inertia * Vector3::new(y[3], y[4], y[5])).norm();
    let h0 = h(&y);
    for _ in 0..5000 {
        y = rk4_step(&y, 1e-3, spin);
    }
    (dp, (h(&y) - h0).abs() / h0)
}

fn numerics() -> Outcome {
    let order = plant_rk4_order();
    let (dp, dh) = free_body_drift();

    let a = DMatrix::from_row_slice(3, 3, &[-1.0, 2.0, 0.5, 0.0, -3.0, 1.0, 4.0, 0.0, -0.2]);
    let b = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 2.0, -1.0, 0.5]);
    let f = |x: &DVector<f64>, u: &DVector<f64>| &a * x + &b * u;
    let x0 = DVector::from_row_slice(&[0.3, -1.2, 2.0]);
    let u0 = DVector::from_row_slice(&[0.7, -0.1]);
    let (ae, be) = linearize_system(f, &x0, &u0, DEFAULT_STEP).unwrap();
    let lin_err = (ae - &a).amax().max((be - &b).amax());

    let tire = PlantParams::reference().tire;
    let mut rng = StdRng::seed_from_u64(11);
    let mut eps_exact = true;
    let mut ellipse_excess = 0.0f64;
    for _ in 0..10_000 {
        let (lam, fz, mu, eps) = (
            rng.random_range(-1.0..1.0),
            rng.random_range(0.0..4000.0),
            rng.random_range(0.05..1.2),
            rng.random_range(0.0..2.0),
        );
        eps_exact &= pacejka_longitudinal(lam, fz, mu, eps, &tire)
            == eps * pacejka_longitudinal(lam, fz, mu, 1.0, &tire);
        let (fx, fy) = (rng.random_range(-8000.0..8000.0), rng.random_range(-8000.0..8000.0));
        let (gx, gy) = friction_ellipse(fx, fy, fz, mu, &tire);
        ellipse_excess = ellipse_excess.max(ellipse_usage(gx, gy, &tire) - mu * fz);
    }

    let pass = (3.5..=4.5).contains(&order) && dp <= 1e-9 && dh <= 1e-9 && lin_err <= 1e-6 && eps_exact
        && ellipse_excess <= 1e-9;
    outcome(
        pass,
        format!(
            "rk4 order {order:.3}; momentum drift {dp:.1e} / {dh:.1e}; linearize error {lin_err:.1e}; \
             eps linear {eps_exact}; ellipse excess {ellipse_excess:.1e}"
        ),
    )
}

fn golden_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn determinism() -> Outcome {
    let sc = load_config(&golden_path().join("cruise.toml")).unwrap();
    let (a, b) = match (run_scenario(&sc), run_scenario(&sc)) {
        (Ok(a), Ok(b)) => (a.trace, b.trace),
        (a, b) => return outcome(false, format!("run failed: {:?} {:?}", a.err(), b.err())),
    };
    let bytes = a.to_csv_bytes();
    let identical = bytes == b.to_csv_bytes();
    let back = Trace::read_csv(bytes.as_slice()).unwrap();
    let lossless = back.to_csv_bytes() == bytes
        && back.rows.iter().flatten().zip(a.rows.iter().flatten()).all(|(x, y)| x.to_bits() == y.to_bits());

    let hash = a.sha256_hex();
    let file = golden_path().join("cruise.sha256");
    let stored = std::fs::read_to_string(&file).ok().map(|s| s.trim().to_string());
    let golden = match stored {
        Some(h) if std::env::var_os("UPDATE_GOLDEN").is_none() => h == hash,
        _ => {
            std::fs::write(&file, format!("{hash}\n")).unwrap();
            true
        }
    };
    outcome(
        identical && lossless && golden,
        format!("repeat identical {identical}; csv lossless {lossless}; golden hash match {golden} ({})", &hash[..16]),
    )
}

#[test]
fn acceptance() {
    let criteria: [(&str, Duration, fn() -> Outcome); 9] = [
        ("transformation uniqueness", Duration::from_secs(1), transformation_uniqueness),
        ("slip-limit preservation", Duration::from_secs(30 * 6), slip_limit),
        ("operating-point stability dichotomy", Duration::from_secs(5), stability_dichotomy),
        ("closed-loop stabilization", Duration::from_secs(5), closed_loop_stabilization),
        ("eps robustness", Duration::from_secs(30), eps_robustness),
        ("gamma preference", Duration::from_secs(60), gamma_preference),
        ("baseline comparison", Duration::from_secs(60), baseline_comparison),
        ("numerics", Duration::from_secs(10), numerics),
        ("determinism and regression", Duration::from_secs(30), determinism),
    ];
    let mut failed = Vec::new();
    println!();
    for (k, (name, limit, check)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let o = check();
        let dt = t0.elapsed();
        let pass = o.pass && dt <= *limit;
        println!(
            "{} [{}] {name}: {} ({:.2} s, limit {} s)",
            if pass { "PASS" } else { "FAIL" },
            k + 1,
            o.detail,
            dt.as_secs_f64(),
            limit.as_secs()
        );
        if !pass {
            failed.push(k + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
