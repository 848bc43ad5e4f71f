//! Self-contained SVG learning curves from a metrics file.
//!
//! Two stacked panels share the episode axis: episode length on top, mean
//! per-agent reward below. Each panel draws the raw series faintly and an
//! exponentially smoothed trace on top of it.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::trainer::TrainMetrics;

use super::metrics::read_metrics;

pub const DEFAULT_SMOOTHING: f64 = 0.99;

/// Exponential moving average seeded at the first sample:
/// s[0] = x[0], s[i] = factor * s[i-1] + (1 - factor) * x[i].
/// A factor of zero returns the series unchanged.
pub fn smooth(xs: &[f64], factor: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len());
    let Some(&first) = xs.first() else {
        return out;
    };
    let mut s = first;
    out.push(s);
    for &x in &xs[1..] {
        s = factor * s + (1.0 - factor) * x;
        out.push(s);
    }
    out
}

const CANVAS_W: f64 = 880.0;
const CANVAS_H: f64 = 640.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const PANEL_TOP: [f64; 2] = [40.0, 360.0];
const PANEL_H: f64 = 230.0;

struct Frame {
    top: f64,
    lo: f64,
    hi: f64,
    n: usize,
}

impl Frame {
    fn new(top: f64, ys: &[f64]) -> Frame {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &y in ys {
            lo = lo.min(y);
            hi = hi.max(y);
        }
        if hi - lo < 1e-9 {
            lo -= 1.0;
            hi += 1.0;
        } else {
            let pad = 0.05 * (hi - lo);
            lo -= pad;
            hi += pad;
        }
        Frame { top, lo, hi, n: ys.len() }
    }

    fn x(&self, i: usize) -> f64 {
        let w = CANVAS_W - MARGIN_LEFT - MARGIN_RIGHT;
        MARGIN_LEFT + w * i as f64 / (self.n - 1) as f64
    }

    fn y(&self, v: f64) -> f64 {
        self.top + PANEL_H * (1.0 - (v - self.lo) / (self.hi - self.lo))
    }
}

fn tick_label(v: f64) -> String {
    let mut s = format!("{v:.2}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

fn polyline(frame: &Frame, ys: &[f64], style: &str) -> String {
    let pts: Vec<String> = ys
        .iter()
        .enumerate()
        .map(|(i, &v)| format!("{:.2},{:.2}", frame.x(i), frame.y(v)))
        .collect();
    format!(
        "  <polyline fill=\"none\" {} points=\"{}\"/>\n",
        style,
        pts.join(" ")
    )
}

fn panel(svg: &mut String, top: f64, title: &str, color: &str, ys: &[f64], factor: f64) {
    let frame = Frame::new(top, ys);
    let bottom = top + PANEL_H;
    let right = CANVAS_W - MARGIN_RIGHT;

    svg.push_str(&format!(
        "  <text x=\"{MARGIN_LEFT}\" y=\"{:.2}\" class=\"title\">{title}</text>\n",
        top - 10.0
    ));
    svg.push_str(&format!(
        "  <line x1=\"{MARGIN_LEFT}\" y1=\"{top}\" x2=\"{MARGIN_LEFT}\" y2=\"{bottom}\" class=\"axis\"/>\n"
    ));
    svg.push_str(&format!(
        "  <line x1=\"{MARGIN_LEFT}\" y1=\"{bottom}\" x2=\"{right}\" y2=\"{bottom}\" class=\"axis\"/>\n"
    ));
    for t in 0..=3 {
        let v = frame.lo + (frame.hi - frame.lo) * t as f64 / 3.0;
        let y = frame.y(v);
        svg.push_str(&format!(
            "  <line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{MARGIN_LEFT}\" y2=\"{y:.2}\" class=\"axis\"/>\n",
            MARGIN_LEFT - 5.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{:.2}\" y=\"{:.2}\" class=\"ylabel\">{}</text>\n",
            MARGIN_LEFT - 9.0,
            y + 4.0,
            tick_label(v)
        ));
    }
    for i in [0, (ys.len() - 1) / 2, ys.len() - 1] {
        let x = frame.x(i);
        svg.push_str(&format!(
            "  <line x1=\"{x:.2}\" y1=\"{bottom}\" x2=\"{x:.2}\" y2=\"{:.2}\" class=\"axis\"/>\n",
            bottom + 5.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{x:.2}\" y=\"{:.2}\" class=\"xlabel\">{i}</text>\n",
            bottom + 18.0
        ));
    }
    svg.push_str(&format!(
        "  <text x=\"{:.2}\" y=\"{:.2}\" class=\"xlabel\">episode</text>\n",
        (MARGIN_LEFT + right) / 2.0,
        bottom + 34.0
    ));

    svg.push_str(&polyline(
        &frame,
        ys,
        &format!("stroke=\"{color}\" stroke-opacity=\"0.3\" stroke-width=\"1\""),
    ));
    svg.push_str(&polyline(
        &frame,
        &smooth(ys, factor),
        &format!("stroke=\"{color}\" stroke-width=\"2\""),
    ));
}

/// Renders the two learning-curve panels. Needs at least two episodes; a
/// single point has no curve to draw.
pub fn render_plot(rows: &[TrainMetrics], smoothing: f64) -> Result<String> {
    if rows.len() < 2 {
        return Err(Error::Config(format!(
            "plotting needs at least two episodes, got {}",
            rows.len()
        )));
    }
    if !(0.0..1.0).contains(&smoothing) {
        return Err(Error::Config(format!(
            "smoothing factor must lie in [0, 1), got {smoothing}"
        )));
    }
    let steps: Vec<f64> = rows.iter().map(|r| r.steps_alive as f64).collect();
    let rewards: Vec<f64> = rows.iter().map(|r| r.mean_agent_reward).collect();

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{CANVAS_W}\" height=\"{CANVAS_H}\" \
         viewBox=\"0 0 {CANVAS_W} {CANVAS_H}\">\n"
    ));
    svg.push_str(
        "  <style>\n    .title { font: bold 13px monospace; }\n    .ylabel { font: 11px monospace; text-anchor: end; }\n    .xlabel { font: 11px monospace; text-anchor: middle; }\n    .axis { stroke: #444444; stroke-width: 1; }\n  </style>\n",
    );
    svg.push_str(&format!(
        "  <rect x=\"0\" y=\"0\" width=\"{CANVAS_W}\" height=\"{CANVAS_H}\" fill=\"#ffffff\"/>\n"
    ));
    panel(
        &mut svg,
        PANEL_TOP[0],
        "steps alive per episode",
        "#2266aa",
        &steps,
        smoothing,
    );
    panel(
        &mut svg,
        PANEL_TOP[1],
        "mean agent reward per episode",
        "#aa3322",
        &rewards,
        smoothing,
    );
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Reads a metrics file and writes the rendered SVG to `out`.
pub fn emit_plot(metrics: &Path, out: &Path, smoothing: f64) -> Result<()> {
    let rows = read_metrics(metrics)?;
    let svg = render_plot(&rows, smoothing)?;
    fs::write(out, svg)?;
    Ok(())
}
