//! Minimal self-contained SVG line/point plots with linear or log axes.

use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mark {
    Line,
    Dashed,
    Points,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub mark: Mark,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub label: String,
    pub log: bool,
}

const W: f64 = 640.0;
const H: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 4] = ["#1f4e9c", "#c0392b", "#2e7d32", "#6a1b9a"];

struct Scale {
    lo: f64,
    hi: f64,
    log: bool,
    from: f64,
    to: f64,
}

impl Scale {
    fn new(values: impl Iterator<Item = f64>, log: bool, from: f64, to: f64) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite() && (!log || *v > 0.0)) {
            let v = if log { v.log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if log {
            lo = lo.floor();
            hi = hi.ceil().max(lo + 1.0);
        } else if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
            let pad = 0.5 * hi.abs().max(1.0);
            lo -= pad;
            hi += pad;
        } else {
            let pad = 0.04 * (hi - lo);
            lo -= pad;
            hi += pad;
        }
        Scale {
            lo,
            hi,
            log,
            from,
            to,
        }
    }

    fn map(&self, v: f64) -> Option<f64> {
        let u = if self.log {
            if v <= 0.0 {
                return None;
            }
            v.log10()
        } else {
            v
        };
        u.is_finite()
            .then(|| self.from + (u - self.lo) / (self.hi - self.lo) * (self.to - self.from))
    }

    /// Tick positions in data units.
    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let (a, b) = (self.lo as i32, self.hi as i32);
            let step = ((b - a) / 8 + 1).max(1);
            (a..=b)
                .step_by(step as usize)
                .map(|e| 10f64.powi(e))
                .collect()
        } else {
            let raw = (self.hi - self.lo) / 6.0;
            let mag = 10f64.powf(raw.log10().floor());
            let step = [1.0, 2.0, 5.0, 10.0]
                .iter()
                .map(|m| m * mag)
                .find(|s| *s >= raw)
                .unwrap_or(10.0 * mag);
            let first = (self.lo / step).ceil() as i64;
            let last = (self.hi / step).floor() as i64;
            (first..=last).map(|k| k as f64 * step).collect()
        }
    }
}

fn tick_label(v: f64, log: bool) -> String {
    if log {
        format!("1e{}", v.log10().round() as i32)
    } else if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-3) {
        format!("{v:.3e}")
    } else {
        format!("{}", (v * 1e6).round() / 1e6)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

pub fn render_svg(title: &str, x_axis: &Axis, y_axis: &Axis, series: &[Series]) -> String {
    let sx = Scale::new(
        series.iter().flat_map(|s| s.x.iter().copied()),
        x_axis.log,
        LEFT,
        W - RIGHT,
    );
    let sy = Scale::new(
        series.iter().flat_map(|s| s.y.iter().copied()),
        y_axis.log,
        H - BOTTOM,
        TOP,
    );
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
    let _ = writeln!(
        s,
        r#"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y0 - y1
    );
    for t in sx.ticks() {
        if let Some(px) = sx.map(t) {
            let _ = writeln!(
                s,
                r#"<line x1="{px:.2}" y1="{y0}" x2="{px:.2}" y2="{}" stroke="black"/>"#,
                y0 + 5.0
            );
            let _ = writeln!(
                s,
                r#"<text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#,
                y0 + 18.0,
                tick_label(t, sx.log)
            );
        }
    }
    for t in sy.ticks() {
        if let Some(py) = sy.map(t) {
            let _ = writeln!(
                s,
                r#"<line x1="{}" y1="{py:.2}" x2="{x0}" y2="{py:.2}" stroke="black"/>"#,
                x0 - 5.0
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
                x0 - 8.0,
                py + 4.0,
                tick_label(t, sy.log)
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        H - 18.0,
        escape(&x_axis.label)
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
        (y0 + y1) / 2.0,
        escape(&y_axis.label)
    );
    for (k, ser) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<(f64, f64)> = ser
            .x
            .iter()
            .zip(&ser.y)
            .filter_map(|(&x, &y)| Some((sx.map(x)?, sy.map(y)?)))
            .collect();
        let _ = writeln!(
            s,
            r#"<g class="series" data-label="{}">"#,
            escape(&ser.label)
        );
        match ser.mark {
            Mark::Points => {
                for (px, py) in &pts {
                    let _ = writeln!(
                        s,
                        r#"<circle cx="{px:.2}" cy="{py:.2}" r="3" fill="{color}"/>"#
                    );
                }
            }
            Mark::Line | Mark::Dashed => {
                let path: Vec<String> = pts
                    .iter()
                    .map(|(px, py)| format!("{px:.2},{py:.2}"))
                    .collect();
                let dash = if ser.mark == Mark::Dashed {
                    r#" stroke-dasharray="6,4""#
                } else {
                    ""
                };
                let _ = writeln!(
                    s,
                    r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
                    path.join(" ")
                );
            }
        }
        let ly = TOP + 16.0 + 16.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly}" text-anchor="end" fill="{color}">{}</text>"#,
            x1 - 8.0,
            escape(&ser.label)
        );
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    s
}
