//! Static SVG bar charts of aggregate results.
//!
//! One chart per task: a panel per objective, scenarios grouped along the
//! x axis, one bar per method with a ±1 stddev whisker, and a bold tick at
//! the known-trajectory baseline where available.

use std::fmt::Write as _;

use crate::harness::{AggregateResult, Method};
use crate::objectives::OBJECTIVE_NAMES;

const PANEL_W: f64 = 260.0;
const PANEL_H: f64 = 220.0;
const MARGIN_L: f64 = 48.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 56.0;
const GAP: f64 = 24.0;
const Y_TICKS: usize = 4;

fn method_color(m: Method) -> &'static str {
    match m {
        Method::Momdp => "#4c72b0",
        Method::Cmdp => "#dd8452",
    }
}

/// Renders the chart for `task` from `rows` (rows of other tasks are
/// ignored). `y_max` fixes the vertical scale, normally the horizon.
pub fn render_task_svg(task: &str, rows: &[AggregateResult], y_max: f64) -> String {
    let rows: Vec<&AggregateResult> = rows.iter().filter(|r| r.task == task).collect();
    let mut scenarios: Vec<&str> = Vec::new();
    let mut methods: Vec<Method> = Vec::new();
    for r in &rows {
        if !scenarios.contains(&r.scenario.as_str()) {
            scenarios.push(&r.scenario);
        }
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
    }
    let y_max = rows
        .iter()
        .flat_map(|r| (0..4).map(move |k| r.mean[k] + r.stddev[k]))
        .fold(y_max.max(1e-9), f64::max);

    let width = MARGIN_L + 4.0 * (PANEL_W + GAP);
    let height = MARGIN_T + PANEL_H + MARGIN_B + 24.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="18" font-size="14" text-anchor="middle">{} (mean ± 1 stddev, baseline ticks)</text>"#,
        width / 2.0,
        escape(task)
    );

    for (k, name) in OBJECTIVE_NAMES.iter().enumerate() {
        let x0 = MARGIN_L + k as f64 * (PANEL_W + GAP);
        let y_of = |v: f64| MARGIN_T + PANEL_H * (1.0 - (v / y_max).clamp(0.0, 1.0));
        let _ = writeln!(
            s,
            r##"<rect x="{x0}" y="{MARGIN_T}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="#999"/>"##
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{name}</text>"#,
            x0 + PANEL_W / 2.0,
            MARGIN_T - 6.0
        );
        for i in 0..=Y_TICKS {
            let v = y_max * i as f64 / Y_TICKS as f64;
            let y = y_of(v);
            let _ = writeln!(
                s,
                r##"<line x1="{}" y1="{y:.2}" x2="{x0}" y2="{y:.2}" stroke="#999"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
                x0 - 4.0,
                x0 - 6.0,
                y + 4.0,
                trim(v)
            );
        }
        let group_w = PANEL_W / scenarios.len().max(1) as f64;
        let bar_w = group_w * 0.7 / methods.len().max(1) as f64;
        for (g, scenario) in scenarios.iter().enumerate() {
            let gx = x0 + g as f64 * group_w;
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
                gx + group_w / 2.0,
                MARGIN_T + PANEL_H + 14.0,
                escape(scenario)
            );
            let mut baseline = None;
            for (b, method) in methods.iter().enumerate() {
                let Some(row) = rows.iter().find(|r| r.scenario == *scenario && r.method == *method)
                else {
                    continue;
                };
                baseline = baseline.or(row.baseline.map(|v| v[k]));
                let bx = gx + group_w * 0.15 + b as f64 * bar_w;
                let top = y_of(row.mean[k]);
                let _ = writeln!(
                    s,
                    r#"<rect x="{bx:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                    bar_w * 0.9,
                    MARGIN_T + PANEL_H - top,
                    method_color(*method)
                );
                let cx = bx + bar_w * 0.45;
                let lo = y_of(row.mean[k] - row.stddev[k]);
                let hi = y_of(row.mean[k] + row.stddev[k]);
                let _ = writeln!(
                    s,
                    r#"<path d="M{cx:.2} {lo:.2}V{hi:.2}M{:.2} {lo:.2}H{:.2}M{:.2} {hi:.2}H{:.2}" stroke="black" fill="none"/>"#,
                    cx - 3.0,
                    cx + 3.0,
                    cx - 3.0,
                    cx + 3.0
                );
            }
            if let Some(v) = baseline {
                let y = y_of(v);
                let _ = writeln!(
                    s,
                    r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black" stroke-width="3"/>"#,
                    gx + group_w * 0.1,
                    gx + group_w * 0.9
                );
            }
        }
    }

    let legend_y = MARGIN_T + PANEL_H + 36.0;
    for (i, m) in methods.iter().enumerate() {
        let x = MARGIN_L + i as f64 * 90.0;
        let _ = writeln!(
            s,
            r#"<rect x="{x}" y="{}" width="12" height="12" fill="{}"/><text x="{}" y="{}">{m}</text>"#,
            legend_y - 10.0,
            method_color(*m),
            x + 16.0,
            legend_y
        );
    }
    let x = MARGIN_L + methods.len() as f64 * 90.0;
    let _ = writeln!(
        s,
        r#"<line x1="{x}" y1="{}" x2="{}" y2="{}" stroke="black" stroke-width="3"/><text x="{}" y="{legend_y}">known-trajectory optimum</text>"#,
        legend_y - 4.0,
        x + 12.0,
        legend_y - 4.0,
        x + 16.0
    );
    s.push_str("</svg>\n");
    s
}

fn trim(v: f64) -> String {
    let s = format!("{v:.1}");
    s.strip_suffix(".0").map(str::to_string).unwrap_or(s)
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
