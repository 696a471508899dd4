//! Trim, numerical linearization and eigen-analysis around straight-line
//! operating points.
//!
//! The analysed state keeps the planar body velocities, the wheel speeds and
//! the actuator torques. Pose is dropped because nothing depends on it, and
//! the heave/roll/pitch states are frozen in the plant anyway.

use nalgebra::{Complex, DMatrix, DVector, Schur};
use thiserror::Error;

use crate::controller::{ControllerGains, PidGains};
use crate::params::PlantParams;
use crate::vehicle::{Plant, PlantInput, VehicleState, STATE_LEN};
use crate::WHEELS;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("trim failed: {0}")]
    Trim(String),
    #[error("non-finite Jacobian entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("wheel {wheel}: no wheel-speed dominant mode (dominance {dominance:.3})")]
    AmbiguousMode { wheel: usize, dominance: f64 },
    #[error("wheel-mode eigenvalue has the same sign at slip {lo} and {hi}")]
    NoSignChange { lo: f64, hi: f64 },
}

pub const STATE_LABELS: [&str; 11] = [
    "vx", "vy", "yaw_rate", "omega_fl", "omega_fr", "omega_rl", "omega_rr", "tau_fl", "tau_fr", "tau_rl",
    "tau_rr",
];
pub const INPUT_LABELS: [&str; 5] = ["tau_ref_fl", "tau_ref_fr", "tau_ref_rl", "tau_ref_rr", "steer"];

/// Full-state indices of the analysed states, in `STATE_LABELS` order.
const STATE_MAP: [usize; 11] = [0, 1, 5, 6, 7, 8, 9, 10, 11, 12, 13];
const OMEGA: usize = 3;

/// Relative finite-difference step.
pub const DEFAULT_STEP: f64 = 1e-6;
/// Derivative norm below which an operating point counts as trimmed.
pub const TRIM_TOLERANCE: f64 = 1e-6;
/// Eigenvalues closer than this (relative to the spectral radius) are
/// treated as one mode cluster.
const CLUSTER_TOL: f64 = 1e-6;
/// Longitudinal speed of the default operating points (m/s).
pub const REFERENCE_SPEED: f64 = 10.0;
/// Minimum share of wheel-speed participation in an identified mode.
const MIN_DOMINANCE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPoint {
    pub state: VehicleState,
    pub torque_ref: [f64; WHEELS],
    pub steer: f64,
    pub mu: [f64; WHEELS],
    pub eps: [f64; WHEELS],
    pub slip: f64,
    /// Norm of the derivative of every analysed state except `vx`, which is
    /// held quasi-statically.
    pub residual: f64,
}

impl OperatingPoint {
    pub fn input(&self) -> PlantInput {
        PlantInput { torque_ref: self.torque_ref, steer: self.steer, mu: self.mu, eps: self.eps }
    }

    pub fn is_trimmed(&self) -> bool {
        self.residual < TRIM_TOLERANCE
    }
}

fn trim_residual(d: &[f64; STATE_LEN]) -> f64 {
    STATE_MAP[1..].iter().map(|&k| d[k] * d[k]).sum::<f64>().sqrt()
}

/// Straight-line trim on unit friction and unit tire-interface factor.
pub fn trim_at_slip(lambda: f64, vx: f64, p: &PlantParams) -> Result<OperatingPoint, AnalysisError> {
    trim_at_slip_on(lambda, vx, p, [1.0; WHEELS], [1.0; WHEELS])
}

/// Holds every wheel at slip `lambda` while the body moves straight at `vx`
/// and solves each wheel torque for zero spin acceleration by bisection
/// over the actuator range. The body speed is frozen: its own derivative is
/// the net traction surplus and is left out of the residual.
pub fn trim_at_slip_on(
    lambda: f64,
    vx: f64,
    p: &PlantParams,
    mu: [f64; WHEELS],
    eps: [f64; WHEELS],
) -> Result<OperatingPoint, AnalysisError> {
    if !(lambda > -1.0 && lambda < 1.0) {
        return Err(AnalysisError::Trim(format!("slip {lambda} outside (-1, 1)")));
    }
    if !(vx > p.slip_speed_floor) {
        return Err(AnalysisError::Trim(format!("speed {vx} not above the slip floor")));
    }
    let plant = Plant::new(p.clone());
    let r = p.tire.radius;
    let wr = if lambda >= 0.0 { vx / (1.0 - lambda) } else { vx * (1.0 + lambda) };
    let mut state = VehicleState::rolling(vx, r);
    state.wheel_speed = [wr / r; WHEELS];
    let mut input = PlantInput { torque_ref: [0.0; WHEELS], steer: 0.0, mu, eps };
    let (lo0, hi0) = (p.drivetrain.torque_min, p.drivetrain.torque_max);
    for i in 0..WHEELS {
        let spin = |tau: f64| {
            let mut s = state;
            s.torque[i] = tau;
            plant.derivative(&s, &input)[6 + i]
        };
        let (mut lo, mut hi) = (lo0, hi0);
        if spin(lo) > 0.0 || spin(hi) < 0.0 {
            return Err(AnalysisError::Trim(format!(
                "wheel {i} cannot hold slip {lambda} within the torque limits"
            )));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if spin(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let tau = if spin(lo).abs() <= spin(hi).abs() { lo } else { hi };
        state.torque[i] = tau;
        input.torque_ref[i] = tau;
    }
    let residual = trim_residual(&plant.derivative(&state, &input));
    Ok(OperatingPoint { state, torque_ref: input.torque_ref, steer: 0.0, mu, eps, slip: lambda, residual })
}

/// Central-difference Jacobians `(df/dx, df/du)` with per-coordinate step
/// `h (1 + |x_j|)`.
pub fn linearize_system<F>(
    f: F,
    x0: &DVector<f64>,
    u0: &DVector<f64>,
    h: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>), AnalysisError>
where
    F: Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64>,
{
    let n = f(x0, u0).len();
    let column = |j: usize, wrt_x: bool| -> DVector<f64> {
        let (mut xp, mut xm, mut up, mut um) = (x0.clone(), x0.clone(), u0.clone(), u0.clone());
        let base = if wrt_x { x0[j] } else { u0[j] };
        let step = h * (1.0 + base.abs());
        if wrt_x {
            xp[j] += step;
            xm[j] -= step;
        } else {
            up[j] += step;
            um[j] -= step;
        }
        (f(&xp, &up) - f(&xm, &um)) / (2.0 * step)
    };
    let mut a = DMatrix::zeros(n, x0.len());
    let mut b = DMatrix::zeros(n, u0.len());
    for j in 0..x0.len() {
        a.set_column(j, &column(j, true));
    }
    for j in 0..u0.len() {
        b.set_column(j, &column(j, false));
    }
    for (m, offset) in [(&a, 0), (&b, x0.len())] {
        if let Some(k) = m.iter().position(|v| !v.is_finite()) {
            return Err(AnalysisError::NonFinite { row: k % n, col: offset + k / n });
        }
    }
    Ok((a, b))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// Slip ratio of each wheel with respect to the state.
    pub c: DMatrix<f64>,
    pub state_labels: Vec<String>,
    pub input_labels: Vec<String>,
    pub op: OperatingPoint,
}

fn embed(base: &VehicleState, x: &DVector<f64>) -> VehicleState {
    let mut full = base.to_array();
    for (k, &idx) in STATE_MAP.iter().enumerate() {
        full[idx] = x[k];
    }
    VehicleState::from_array(&full)
}

fn input_from(op: &OperatingPoint, u: &DVector<f64>) -> PlantInput {
    PlantInput { torque_ref: [u[0], u[1], u[2], u[3]], steer: u[4], mu: op.mu, eps: op.eps }
}

pub fn linearize(plant: &Plant, op: &OperatingPoint, h: f64) -> Result<LinearModel, AnalysisError> {
    let full = op.state.to_array();
    let x0 = DVector::from_iterator(STATE_MAP.len(), STATE_MAP.iter().map(|&k| full[k]));
    let mut u0 = DVector::from_row_slice(&op.torque_ref);
    u0 = u0.push(op.steer);
    let f = |x: &DVector<f64>, u: &DVector<f64>| {
        let d = plant.derivative(&embed(&op.state, x), &input_from(op, u));
        DVector::from_iterator(STATE_MAP.len(), STATE_MAP.iter().map(|&k| d[k]))
    };
    let (a, b) = linearize_system(f, &x0, &u0, h)?;
    let slip = |x: &DVector<f64>, u: &DVector<f64>| {
        let kin = plant.wheel_kinematics(&embed(&op.state, x), u[4]);
        DVector::from_iterator(WHEELS, kin.iter().map(|k| k.0))
    };
    let (c, _) = linearize_system(slip, &x0, &u0, h)?;
    Ok(LinearModel {
        a,
        b,
        c,
        state_labels: STATE_LABELS.iter().map(|s| s.to_string()).collect(),
        input_labels: INPUT_LABELS.iter().map(|s| s.to_string()).collect(),
        op: op.clone(),
    })
}

/// A group of (nearly) coincident eigenvalues and the participation of each
/// state in their invariant subspace. Participation sums to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeCluster {
    pub eigenvalues: Vec<Complex<f64>>,
    pub participation: Vec<f64>,
}

impl ModeCluster {
    pub fn mean(&self) -> Complex<f64> {
        self.eigenvalues.iter().sum::<Complex<f64>>() / self.eigenvalues.len() as f64
    }
}

/// Eigenvalues from a real Schur form. Exactly decoupled blocks can stall
/// the QR iteration, so on failure the matrix is retried under a fixed
/// orthogonal similarity, which leaves the spectrum unchanged.
pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<Complex<f64>> {
    let n = a.nrows();
    let tol = f64::EPSILON * a.amax().max(1.0);
    if let Some(s) = Schur::try_new(a.clone(), tol, 10_000) {
        return s.complex_eigenvalues().iter().copied().collect();
    }
    let mixing = DMatrix::from_fn(n, n, |r, c| ((r * 7 + c * 13 + 1) as f64).sin());
    let q = mixing.qr().q();
    let rotated = q.transpose() * a * &q;
    let s = Schur::try_new(rotated, tol, 100_000).expect("Schur iteration did not converge");
    s.complex_eigenvalues().iter().copied().collect()
}

pub fn spectral_radius(eigs: &[Complex<f64>]) -> f64 {
    eigs.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Groups eigenvalues into clusters and computes participation factors from
/// the right and left null spaces of `A - lambda I`. A cluster of size `k`
/// uses the `k` smallest singular vectors, so repeated eigenvalues get the
/// participation of their whole invariant subspace.
pub fn mode_clusters(a: &DMatrix<f64>) -> Vec<ModeCluster> {
    let n = a.nrows();
    let eigs = eigenvalues(a);
    let scale = spectral_radius(&eigs).max(1.0);
    let mut used = vec![false; n];
    let mut clusters = Vec::new();
    for i in 0..n {
        if used[i] {
            continue;
        }
        let mut members = vec![eigs[i]];
        used[i] = true;
        for j in i + 1..n {
            if !used[j] && (eigs[j] - eigs[i]).norm() <= CLUSTER_TOL * scale {
                used[j] = true;
                members.push(eigs[j]);
            }
        }
        let k = members.len();
        let centre = members.iter().sum::<Complex<f64>>() / k as f64;
        let m = DMatrix::from_fn(n, n, |r, c| {
            Complex::new(a[(r, c)], 0.0) - if r == c { centre } else { Complex::new(0.0, 0.0) }
        });
        let svd = m.svd(true, true);
        let (u, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v requested"));
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&x, &y| svd.singular_values[x].total_cmp(&svd.singular_values[y]));
        let right = DMatrix::from_fn(n, k, |r, c| vt[(order[c], r)].conj());
        let left = DMatrix::from_fn(n, k, |r, c| u[(r, order[c])]);
        let gram = left.adjoint() * &right;
        let proj = match gram.try_inverse() {
            Some(g) => &right * g * left.adjoint(),
            None => DMatrix::from_element(n, n, Complex::new(f64::NAN, 0.0)),
        };
        let diag: Vec<f64> = (0..n).map(|j| proj[(j, j)].norm()).collect();
        let total: f64 = diag.iter().sum();
        let participation = diag.iter().map(|d| d / total).collect();
        clusters.push(ModeCluster { eigenvalues: members, participation });
    }
    clusters
}

/// Real part of the eigenvalue of the mode in which the wheel's spin speed
/// participates most. The mode must be wheel-speed dominated.
pub fn wheel_mode_eigenvalue(lm: &LinearModel, wheel: usize) -> Result<f64, AnalysisError> {
    let clusters = mode_clusters(&lm.a);
    let state = OMEGA + wheel;
    let best = clusters
        .iter()
        .filter(|c| c.participation.iter().all(|p| p.is_finite()))
        .max_by(|x, y| x.participation[state].total_cmp(&y.participation[state]));
    let Some(best) = best else {
        return Err(AnalysisError::AmbiguousMode { wheel, dominance: 0.0 });
    };
    let dominance: f64 = best.participation[OMEGA..OMEGA + WHEELS].iter().sum();
    if dominance < MIN_DOMINANCE {
        return Err(AnalysisError::AmbiguousMode { wheel, dominance });
    }
    Ok(best.mean().re)
}

/// Zero-order-hold discretisation by the matrix exponential of the
/// augmented system.
pub fn discretize(a: &DMatrix<f64>, b: &DMatrix<f64>, ts: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, m) = (a.nrows(), b.ncols());
    let mut aug = DMatrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(a);
    aug.view_mut((0, n), (n, m)).copy_from(b);
    let e = (aug * ts).exp();
    (e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, m)).into_owned())
}

/// Sampled-data closed loop of the plant with one slip PID per wheel, in
/// the same positional form as the runtime controller, slip reference held.
/// Controller states per wheel: integral, filtered derivative, previous
/// measurement.
pub fn closed_loop_matrix(lm: &LinearModel, g: &ControllerGains) -> DMatrix<f64> {
    let n = lm.a.nrows();
    let ts = g.ts;
    let (phi, gam) = discretize(&lm.a, &lm.b, ts);
    let gu = gam.columns(0, WHEELS).into_owned();
    let c = &lm.c;
    let k = g.slip_gain_scale(lm.op.state.v.x);
    let s = &PidGains { kp: k * g.slip.kp, ki: k * g.slip.ki, kd: k * g.slip.kd, filter: g.slip.filter };
    let q = 1.0 / (1.0 + s.filter * ts);
    let kdn = s.kd * s.filter * q;
    let (oi, od, oy) = (n, n + WHEELS, n + 2 * WHEELS);
    let size = n + 3 * WHEELS;

    // u = kx x + ki I + q D + kdn y_prev
    let kx = c * (-(s.kp + kdn));
    let mut ku = DMatrix::zeros(WHEELS, size);
    ku.view_mut((0, 0), (WHEELS, n)).copy_from(&kx);
    for i in 0..WHEELS {
        ku[(i, oi + i)] = s.ki;
        ku[(i, od + i)] = q;
        ku[(i, oy + i)] = kdn;
    }
    let mut m = DMatrix::zeros(size, size);
    m.view_mut((0, 0), (n, n)).copy_from(&phi);
    let plant_rows = &gu * &ku;
    let mut top = m.view_mut((0, 0), (n, size));
    top += plant_rows;
    for i in 0..WHEELS {
        for j in 0..n {
            m[(oi + i, j)] = -ts * c[(i, j)];
            m[(od + i, j)] = -kdn * c[(i, j)];
            m[(oy + i, j)] = c[(i, j)];
        }
        m[(oi + i, oi + i)] = 1.0;
        m[(od + i, od + i)] = q;
        m[(od + i, oy + i)] = kdn;
    }
    m
}

pub fn closed_loop_spectrum(lm: &LinearModel, g: &ControllerGains) -> Vec<Complex<f64>> {
    eigenvalues(&closed_loop_matrix(lm, g))
}

/// Wheel-mode eigenvalue at a trimmed straight-line operating point.
pub fn wheel_eigenvalue_at(lambda: f64, vx: f64, p: &PlantParams, wheel: usize) -> Result<f64, AnalysisError> {
    let op = trim_at_slip(lambda, vx, p)?;
    let lm = linearize(&Plant::new(p.clone()), &op, DEFAULT_STEP)?;
    wheel_mode_eigenvalue(&lm, wheel)
}

/// Slip at which the wheel-mode eigenvalue changes sign, by bisection on
/// `[lo, hi]` down to `tol`.
pub fn wheel_mode_sign_change(
    vx: f64,
    p: &PlantParams,
    wheel: usize,
    (mut lo, mut hi): (f64, f64),
    tol: f64,
) -> Result<f64, AnalysisError> {
    let s_lo = wheel_eigenvalue_at(lo, vx, p, wheel)?.signum();
    if s_lo == wheel_eigenvalue_at(hi, vx, p, wheel)?.signum() {
        return Err(AnalysisError::NoSignChange { lo, hi });
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if wheel_eigenvalue_at(mid, vx, p, wheel)?.signum() == s_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
