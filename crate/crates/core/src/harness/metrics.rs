//! Summary metrics and paired comparison of runs.

use thiserror::Error;

use super::trace::Trace;
use crate::WHEELS;

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub vx_rms: f64,
    pub yaw_rate_rms: f64,
    pub max_abs_slip: [f64; WHEELS],
    pub max_abs_beta: f64,
    /// Integral of squared actual torque per wheel (N^2 m^2 s).
    pub torque_energy: [f64; WHEELS],
}

impl Metrics {
    pub fn max_slip(&self) -> f64 {
        self.max_abs_slip.iter().copied().fold(0.0f64, f64::max)
    }

    pub fn total_torque_energy(&self) -> f64 {
        self.torque_energy.iter().sum()
    }
}

pub fn rms(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for x in xs {
        sum += x * x;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

/// RMS of `a - b` over samples with `t` in `[t0, t1]`.
pub fn rms_error_between(trace: &Trace, a: &str, b: &str, t0: f64, t1: f64) -> f64 {
    let t = trace.times();
    let (a, b) = (trace.column(a), trace.column(b));
    rms((0..t.len()).filter(|&k| t[k] >= t0 && t[k] <= t1).map(|k| a[k] - b[k]))
}

/// Mean of a column over `[t0, t1]`.
pub fn mean_between(trace: &Trace, col: &str, t0: f64, t1: f64) -> f64 {
    let t = trace.times();
    let c = trace.column(col);
    let sel: Vec<f64> = (0..t.len()).filter(|&k| t[k] >= t0 && t[k] <= t1).map(|k| c[k]).collect();
    sel.iter().sum::<f64>() / sel.len().max(1) as f64
}

pub fn compute_metrics(trace: &Trace) -> Metrics {
    let t = trace.times();
    let dt = if t.len() > 1 { t[1] - t[0] } else { 0.0 };
    let vx = trace.column("vx");
    let v_ref = trace.column("v_ref");
    let yaw = trace.column("yaw_rate");
    let yaw_ref = trace.column("yaw_rate_ref");
    let beta = trace.column("beta");
    Metrics {
        vx_rms: rms(vx.iter().zip(&v_ref).map(|(a, b)| a - b)),
        yaw_rate_rms: rms(yaw.iter().zip(&yaw_ref).map(|(a, b)| a - b)),
        max_abs_slip: std::array::from_fn(|i| {
            trace.wheel_column("lambda", i).iter().fold(0.0f64, |m, l| m.max(l.abs()))
        }),
        max_abs_beta: beta.iter().fold(0.0f64, |m, b| m.max(b.abs())),
        torque_energy: std::array::from_fn(|i| trace.wheel_column("tau", i).iter().map(|x| x * x * dt).sum()),
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CompareError {
    #[error("need at least two traces")]
    TooFew,
    #[error("trace {index} does not share the timeline of trace 0")]
    MismatchedTimelines { index: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub name: &'static str,
    pub values: Vec<f64>,
    /// Index of the run with the lowest value.
    pub winner: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<MetricRow>,
}

impl Comparison {
    pub fn row(&self, name: &str) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// Plain-text table, one metric per line.
    pub fn render(&self, labels: &[String]) -> String {
        let mut out = format!("{:<20}", "metric");
        for l in labels {
            out.push_str(&format!("{l:>16}"));
        }
        out.push_str(&format!("{:>16}\n", "winner"));
        for r in &self.rows {
            out.push_str(&format!("{:<20}", r.name));
            for v in &r.values {
                out.push_str(&format!("{v:>16.6}"));
            }
            let w = labels.get(r.winner).cloned().unwrap_or_default();
            out.push_str(&format!("{w:>16}\n"));
        }
        out
    }
}

/// Paired metrics over traces that share a time base. Lower is better for
/// every metric; ties go to the earlier trace.
pub fn compare_runs(traces: &[&Trace]) -> Result<Comparison, CompareError> {
    if traces.len() < 2 {
        return Err(CompareError::TooFew);
    }
    let t0 = traces[0].times();
    for (k, tr) in traces.iter().enumerate().skip(1) {
        let t = tr.times();
        if t.len() != t0.len() || t.iter().zip(&t0).any(|(a, b)| a != b) {
            return Err(CompareError::MismatchedTimelines { index: k });
        }
    }
    let ms: Vec<Metrics> = traces.iter().map(|t| compute_metrics(t)).collect();
    let mk = |name: &'static str, f: &dyn Fn(&Metrics) -> f64| {
        let values: Vec<f64> = ms.iter().map(f).collect();
        let winner = (0..values.len()).fold(0, |w, i| if values[i] < values[w] { i } else { w });
        MetricRow { name, values, winner }
    };
    Ok(Comparison {
        rows: vec![
            mk("yaw_rate_rms", &|m| m.yaw_rate_rms),
            mk("vx_rms", &|m| m.vx_rms),
            mk("max_abs_slip", &|m| m.max_slip()),
            mk("max_abs_beta", &|m| m.max_abs_beta),
            mk("torque_energy", &|m| m.total_torque_energy()),
        ],
    })
}
