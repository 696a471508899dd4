//! Piecewise constant / linear signals over time.

use serde::{Deserialize, Serialize};

/// One segment on `[from, to]`: either `value` (constant) or
/// `ramp = [start, end]` (linear).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub from: f64,
    pub to: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ramp: Option<[f64; 2]>,
}

impl Segment {
    pub fn constant(from: f64, to: f64, value: f64) -> Self {
        Segment { from, to, value: Some(value), ramp: None }
    }

    pub fn linear(from: f64, to: f64, start: f64, end: f64) -> Self {
        Segment { from, to, value: None, ramp: Some([start, end]) }
    }

    fn eval(&self, t: f64) -> f64 {
        match (self.value, self.ramp) {
            (Some(v), _) => v,
            (None, Some([a, b])) => {
                let s = ((t - self.from) / (self.to - self.from)).clamp(0.0, 1.0);
                a + (b - a) * s
            }
            (None, None) => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timeline(pub Vec<Segment>);

const EDGE_TOL: f64 = 1e-9;

impl Timeline {
    pub fn constant(value: f64, duration: f64) -> Self {
        Timeline(vec![Segment::constant(0.0, duration, value)])
    }

    /// Checks shape and that the segments tile `[0, duration]` without gaps.
    /// Errors name the offending interval.
    pub fn validate(&self, duration: f64) -> Result<(), String> {
        if self.0.is_empty() {
            return Err(format!("no segments, gap over [0, {duration}]"));
        }
        for (k, s) in self.0.iter().enumerate() {
            if !(s.from.is_finite() && s.to.is_finite() && s.to > s.from) {
                return Err(format!("segment {k} needs finite from < to"));
            }
            match (s.value, s.ramp) {
                (Some(v), None) if v.is_finite() => {}
                (None, Some([a, b])) if a.is_finite() && b.is_finite() => {}
                _ => return Err(format!("segment {k} needs exactly one finite `value` or `ramp`")),
            }
        }
        let mut covered = 0.0;
        for s in &self.0 {
            if s.from > covered + EDGE_TOL {
                return Err(format!("gap over [{covered}, {}]", s.from));
            }
            if s.from < covered - EDGE_TOL {
                return Err(format!("overlap at [{}, {covered}]", s.from));
            }
            covered = s.to;
        }
        if covered < duration - EDGE_TOL {
            return Err(format!("gap over [{covered}, {duration}]"));
        }
        Ok(())
    }

    /// Value at `t`; a boundary belongs to the later segment. Outside the
    /// covered range the nearest segment is extended.
    pub fn at(&self, t: f64) -> f64 {
        let seg = self
            .0
            .iter()
            .rev()
            .find(|s| t >= s.from)
            .or_else(|| self.0.first());
        seg.map_or(0.0, |s| s.eval(t))
    }

    /// Left-continuous integral from 0 to `t`, used to derive a speed trace
    /// from an acceleration timeline.
    pub fn integral(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for s in &self.0 {
            if t <= s.from {
                break;
            }
            let end = t.min(s.to);
            let mid = 0.5 * (s.from + end);
            acc += s.eval(mid) * (end - s.from);
        }
        acc
    }
}
