//! Double lane change converted to time-domain yaw-rate and steering
//! templates at a fixed target speed.
//!
//! Path: straight entry, sine-curvature transition to the offset lane, hold,
//! sine-curvature transition back, straight exit. Section lengths follow the
//! ISO 3888-1 layout.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaneChange {
    /// Time at which the vehicle enters the first transition.
    pub start: f64,
    /// Speed at the start of the maneuver (m/s).
    pub speed: f64,
    /// Constant longitudinal acceleration assumed while converting the path
    /// into time (m/s^2).
    #[serde(default)]
    pub accel: f64,
    /// Lateral offset of the second lane (m).
    #[serde(default = "default_offset")]
    pub offset: f64,
    #[serde(default = "default_out")]
    pub out_length: f64,
    #[serde(default = "default_hold")]
    pub hold_length: f64,
    #[serde(default = "default_back")]
    pub back_length: f64,
}

fn default_offset() -> f64 {
    1.0
}
fn default_out() -> f64 {
    30.0
}
fn default_hold() -> f64 {
    25.0
}
fn default_back() -> f64 {
    25.0
}

impl LaneChange {
    pub fn validate(&self) -> Result<(), String> {
        let v = [self.start, self.speed, self.accel, self.offset, self.out_length, self.hold_length, self.back_length];
        if v.iter().any(|x| !x.is_finite()) {
            return Err("lane change fields must be finite".into());
        }
        if !(self.speed > 0.0 && self.out_length > 0.0 && self.back_length > 0.0 && self.hold_length >= 0.0) {
            return Err("lane change needs positive speed and section lengths".into());
        }
        if self.speed_at(self.end_time()) <= 0.0 {
            return Err("lane change speed must stay positive".into());
        }
        Ok(())
    }

    /// Path derivatives `(y', y'')` at distance `s` past the start. Each
    /// transition has sinusoidal curvature, so curvature is continuous and
    /// zero at the section ends.
    fn path(&self, s: f64) -> (f64, f64) {
        let transition = |s: f64, len: f64, sign: f64| {
            if s <= 0.0 || s >= len {
                (0.0, 0.0)
            } else {
                let k = 2.0 * std::f64::consts::PI / len;
                let a = sign * self.offset / len;
                (a * (1.0 - (k * s).cos()), a * k * (k * s).sin())
            }
        };
        let back_start = self.out_length + self.hold_length;
        let (d1, c1) = transition(s, self.out_length, 1.0);
        let (d2, c2) = transition(s - back_start, self.back_length, -1.0);
        (d1 + d2, c1 + c2)
    }

    fn elapsed(&self, t: f64) -> f64 {
        (t - self.start).max(0.0)
    }

    /// Template speed at time `t`.
    pub fn speed_at(&self, t: f64) -> f64 {
        self.speed + self.accel * self.elapsed(t)
    }

    /// Distance travelled along the path since the start.
    fn distance(&self, t: f64) -> f64 {
        let tau = self.elapsed(t);
        self.speed * tau + 0.5 * self.accel * tau * tau
    }

    /// Curvature of the path at time `t`.
    pub fn curvature(&self, t: f64) -> f64 {
        if t < self.start {
            return 0.0;
        }
        let (d, c) = self.path(self.distance(t));
        c / (1.0 + d * d).powf(1.5)
    }

    pub fn yaw_rate(&self, t: f64) -> f64 {
        self.speed_at(t) * self.curvature(t)
    }

    /// Kinematic steering angle for the given wheelbase.
    pub fn steer(&self, t: f64, wheelbase: f64) -> f64 {
        (wheelbase * self.curvature(t)).atan()
    }

    pub fn end_time(&self) -> f64 {
        let len = self.out_length + self.hold_length + self.back_length;
        if self.accel == 0.0 {
            self.start + len / self.speed
        } else {
            let disc = self.speed * self.speed + 2.0 * self.accel * len;
            if disc < 0.0 {
                return f64::INFINITY;
            }
            self.start + (disc.sqrt() - self.speed) / self.accel
        }
    }

    /// Peak lateral acceleration of the template at constant speed,
    /// neglecting the path slope in the curvature.
    pub fn peak_lateral_accel(&self) -> f64 {
        let len = self.out_length.min(self.back_length);
        self.speed * self.speed * 2.0 * std::f64::consts::PI * self.offset / (len * len)
    }
}
