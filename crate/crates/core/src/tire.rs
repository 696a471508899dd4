//! Slip kinematics, magic-formula forces and the friction ellipse.

use thiserror::Error;

use crate::params::{Pacejka, TireParams};

#[derive(Debug, Error, PartialEq)]
pub enum TireError {
    #[error("slip undefined: wheel and hub speed are both zero")]
    UndefinedSlip,
    #[error("slip angle undefined at zero longitudinal speed")]
    UndefinedSlipAngle,
    #[error("invalid tire parameters: {0}")]
    InvalidParams(String),
}

/// Longitudinal slip ratio `(w r - vx) / max(|w r|, |vx|)`.
pub fn slip_ratio(omega: f64, radius: f64, vx: f64) -> Result<f64, TireError> {
    let wr = omega * radius;
    let den = wr.abs().max(vx.abs());
    if den == 0.0 {
        return Err(TireError::UndefinedSlip);
    }
    Ok((wr - vx) / den)
}

/// Slip ratio with the denominator floored at `floor`; used by the plant so
/// that standing starts stay finite.
pub fn slip_ratio_floored(omega: f64, radius: f64, vx: f64, floor: f64) -> f64 {
    let wr = omega * radius;
    (wr - vx) / wr.abs().max(vx.abs()).max(floor)
}

/// Slip angle `-atan(vy / |vx|)`.
pub fn slip_angle(vx: f64, vy: f64) -> Result<f64, TireError> {
    if vx == 0.0 {
        return Err(TireError::UndefinedSlipAngle);
    }
    Ok(-(vy / vx.abs()).atan())
}

pub fn slip_angle_floored(vx: f64, vy: f64, floor: f64) -> f64 {
    -(vy / vx.abs().max(floor)).atan()
}

/// Normalised magic formula `D sin(C atan(Bs - E(Bs - atan Bs)))`.
pub fn magic_formula(s: f64, p: &Pacejka) -> f64 {
    let bs = p.b * s;
    p.d * (p.c * (bs - p.e * (bs - bs.atan())).atan()).sin()
}

pub fn pacejka_longitudinal(lambda: f64, fz: f64, mu: f64, eps: f64, p: &TireParams) -> f64 {
    eps * (mu * fz * magic_formula(lambda, &p.longitudinal))
}

pub fn pacejka_lateral(alpha: f64, fz: f64, mu: f64, p: &TireParams) -> f64 {
    mu * fz * magic_formula(alpha, &p.lateral)
}

/// Scales `(fx, fy)` proportionally onto the friction ellipse when it lies
/// outside. Capacity is `mu fz` in the normalised metric
/// `sqrt((fx/Dx)^2 + (fy/Dy)^2)`.
pub fn friction_ellipse(fx: f64, fy: f64, fz: f64, mu: f64, p: &TireParams) -> (f64, f64) {
    let cap = mu * fz;
    if cap <= 0.0 {
        return (0.0, 0.0);
    }
    let used = (fx / p.longitudinal.d).hypot(fy / p.lateral.d);
    if used <= cap {
        (fx, fy)
    } else {
        let k = cap / used;
        (fx * k, fy * k)
    }
}

/// Normalised ellipse usage; `<= mu fz` when admissible.
pub fn ellipse_usage(fx: f64, fy: f64, p: &TireParams) -> f64 {
    (fx / p.longitudinal.d).hypot(fy / p.lateral.d)
}

/// Interior maximum of the longitudinal slip curve on (0, 1).
///
/// Returns `(lambda_max, peak force)` for the given load and friction.
pub fn slip_curve_peak(p: &TireParams, mu: f64, fz: f64) -> Result<(f64, f64), TireError> {
    let f = |s: f64| magic_formula(s, &p.longitudinal);
    let n = 2000;
    let mut best = 1;
    for k in 1..n {
        if f(k as f64 / n as f64) > f(best as f64 / n as f64) {
            best = k;
        }
    }
    if best == n - 1 || f(best as f64 / n as f64) <= f(1.0) {
        return Err(TireError::InvalidParams("slip curve has no interior maximum".into()));
    }
    let (mut a, mut b) = ((best - 1) as f64 / n as f64, (best + 1) as f64 / n as f64);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    while b - a > 1e-12 {
        let x1 = b - g * (b - a);
        let x2 = a + g * (b - a);
        if f(x1) < f(x2) {
            a = x1;
        } else {
            b = x2;
        }
    }
    let lam = 0.5 * (a + b);
    Ok((lam, mu * fz * f(lam)))
}

/// Initial slope of the normalised slip curve, `B C D`.
pub fn linear_tire_stiffness(p: &TireParams) -> f64 {
    p.longitudinal.b * p.longitudinal.c * p.longitudinal.d
}

/// Derivative of the normalised longitudinal slip curve.
pub fn slip_curve_slope(lambda: f64, p: &Pacejka) -> f64 {
    let bs = p.b * lambda;
    let u = bs - p.e * (bs - bs.atan());
    let du = p.b * (1.0 - p.e + p.e / (1.0 + bs * bs));
    p.d * (p.c * u.atan()).cos() * p.c * du / (1.0 + u * u)
}
