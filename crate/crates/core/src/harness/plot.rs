//! Static SVG panel plots of a trace.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::trace::Trace;
use crate::{WHEELS, WHEEL_NAMES};

const WIDTH: f64 = 900.0;
const PANEL_H: f64 = 170.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 110.0;
const MARGIN_T: f64 = 24.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

struct Series {
    label: String,
    values: Vec<f64>,
    dashed: bool,
}

struct Panel {
    title: &'static str,
    series: Vec<Series>,
}

fn nice_range(series: &[Series]) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for &v in &s.values {
            if v.is_finite() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
    }
    if !lo.is_finite() {
        return (-1.0, 1.0);
    }
    if hi - lo < 1e-9 {
        return (lo - 1.0, hi + 1.0);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn render(title: &str, t: &[f64], panels: &[Panel]) -> String {
    let height = MARGIN_T + panels.len() as f64 * PANEL_H + 30.0;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="16" font-size="13">{title}</text>"#, MARGIN_L);
    let (t0, t1) = (t.first().copied().unwrap_or(0.0), t.last().copied().unwrap_or(1.0).max(1e-9));
    let pw = WIDTH - MARGIN_L - MARGIN_R;
    for (k, p) in panels.iter().enumerate() {
        let top = MARGIN_T + k as f64 * PANEL_H + 8.0;
        let ph = PANEL_H - 28.0;
        let (lo, hi) = nice_range(&p.series);
        let x = |v: f64| MARGIN_L + (v - t0) / (t1 - t0) * pw;
        let y = |v: f64| top + (hi - v) / (hi - lo) * ph;
        let _ = writeln!(
            svg,
            r##"<rect x="{MARGIN_L}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#888"/>"##
        );
        let _ = writeln!(svg, r#"<text x="{}" y="{}">{}</text>"#, MARGIN_L + 4.0, top + 12.0, p.title);
        for v in [lo, 0.5 * (lo + hi), hi] {
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" text-anchor="end">{:.3}</text>"#,
                MARGIN_L - 4.0,
                y(v) + 4.0,
                v
            );
        }
        if lo < 0.0 && hi > 0.0 {
            let _ = writeln!(
                svg,
                r##"<line x1="{MARGIN_L}" x2="{0}" y1="{1}" y2="{1}" stroke="#ccc"/>"##,
                MARGIN_L + pw,
                y(0.0)
            );
        }
        for (j, s) in p.series.iter().enumerate() {
            let color = COLORS[j % COLORS.len()];
            let mut pts = String::new();
            for (tv, v) in t.iter().zip(&s.values) {
                let _ = write!(pts, "{:.2},{:.2} ", x(*tv), y(*v));
            }
            let dash = if s.dashed { r#" stroke-dasharray="5,3""# } else { "" };
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.2"{dash} points="{}"/>"#,
                pts.trim_end()
            );
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
                MARGIN_L + pw + 8.0,
                top + 14.0 + 14.0 * j as f64,
                s.label
            );
        }
    }
    let bottom = MARGIN_T + panels.len() as f64 * PANEL_H;
    for v in [t0, 0.5 * (t0 + t1), t1] {
        let xv = MARGIN_L + (v - t0) / (t1 - t0) * pw;
        let _ = writeln!(svg, r#"<text x="{xv}" y="{bottom}" text-anchor="middle">{v:.2} s</text>"#);
    }
    svg.push_str("</svg>\n");
    svg
}

fn series(trace: &Trace, col: &str, label: &str, dashed: bool) -> Series {
    Series { label: label.into(), values: trace.column(col), dashed }
}

fn wheel_panel(trace: &Trace, title: &'static str, col: &str) -> Panel {
    Panel {
        title,
        series: (0..WHEELS)
            .map(|i| Series { label: WHEEL_NAMES[i].into(), values: trace.wheel_column(col, i), dashed: false })
            .collect(),
    }
}

pub fn vehicle_svg(trace: &Trace) -> String {
    let panels = [
        Panel {
            title: "vx (m/s)",
            series: vec![series(trace, "vx", "vx", false), series(trace, "v_ref", "v_ref", true)],
        },
        Panel {
            title: "yaw rate (rad/s)",
            series: vec![
                series(trace, "yaw_rate", "yaw rate", false),
                series(trace, "yaw_rate_ref", "reference", true),
            ],
        },
        Panel { title: "sideslip (rad)", series: vec![series(trace, "beta", "beta", false)] },
        Panel { title: "ax (m/s^2)", series: vec![series(trace, "ax", "ax", false)] },
    ];
    render("vehicle body-fixed variables", &trace.times(), &panels)
}

pub fn wheels_svg(trace: &Trace) -> String {
    let panels = [
        wheel_panel(trace, "pivot acceleration (m/s^2)", "ax_w"),
        wheel_panel(trace, "torque (N m)", "tau"),
        wheel_panel(trace, "slip ratio", "lambda"),
        wheel_panel(trace, "slip reference", "lambda_ref"),
        wheel_panel(trace, "tire-interface factor", "eps"),
        wheel_panel(trace, "normal load (N)", "fz"),
    ];
    render("wheel variables", &trace.times(), &panels)
}

/// Writes `vehicle.svg` and `wheels.svg` into `dir`.
pub fn emit_plots(trace: &Trace, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let out = vec![dir.join("vehicle.svg"), dir.join("wheels.svg")];
    std::fs::write(&out[0], vehicle_svg(trace))?;
    std::fs::write(&out[1], wheels_svg(trace))?;
    Ok(out)
}
