//! Minimal static SVG charts.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN: [f64; 4] = [50.0, 170.0, 50.0, 60.0]; // top, right, bottom, left
const COLOURS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

impl Series {
    pub fn new(name: &str, points: Vec<(f64, f64)>) -> Self {
        Self {
            name: name.to_string(),
            points,
            dashed: false,
        }
    }

    pub fn dashed(mut self) -> Self {
        self.dashed = true;
        self
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Frame {
    x: [f64; 2],
    y: [f64; 2],
}

impl Frame {
    fn fit<'a>(points: impl Iterator<Item = &'a (f64, f64)>, equal: bool) -> Self {
        let mut x = [f64::INFINITY, f64::NEG_INFINITY];
        let mut y = x;
        for &(a, b) in points.filter(|p| p.0.is_finite() && p.1.is_finite()) {
            x = [x[0].min(a), x[1].max(a)];
            y = [y[0].min(b), y[1].max(b)];
        }
        if !x[0].is_finite() {
            x = [0.0, 1.0];
            y = [0.0, 1.0];
        }
        for r in [&mut x, &mut y] {
            if r[1] - r[0] < 1e-9 {
                r[0] -= 0.5;
                r[1] += 0.5;
            }
        }
        if equal {
            let half = 0.5 * (x[1] - x[0]).max(y[1] - y[0]);
            let (cx, cy) = (0.5 * (x[0] + x[1]), 0.5 * (y[0] + y[1]));
            x = [cx - half, cx + half];
            y = [cy - half, cy + half];
        }
        Self { x, y }
    }

    fn px(&self, v: f64) -> f64 {
        MARGIN[3] + (v - self.x[0]) / (self.x[1] - self.x[0]) * (WIDTH - MARGIN[1] - MARGIN[3])
    }

    fn py(&self, v: f64) -> f64 {
        HEIGHT - MARGIN[2] - (v - self.y[0]) / (self.y[1] - self.y[0]) * (HEIGHT - MARGIN[0] - MARGIN[2])
    }
}

fn header(out: &mut String, title: &str, frame: &Frame, xlabel: &str, ylabel: &str) {
    let (x0, x1) = (MARGIN[3], WIDTH - MARGIN[1]);
    let (y0, y1) = (HEIGHT - MARGIN[2], MARGIN[0]);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="25" text-anchor="middle" font-size="15">{}</text>"#,
        0.5 * (x0 + x1),
        escape(title)
    );
    let _ = writeln!(
        out,
        r#"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y0 - y1
    );
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let vx = frame.x[0] + t * (frame.x[1] - frame.x[0]);
        let vy = frame.y[0] + t * (frame.y[1] - frame.y[0]);
        let (gx, gy) = (frame.px(vx), frame.py(vy));
        let _ = writeln!(out, r##"<line x1="{gx:.1}" y1="{y1}" x2="{gx:.1}" y2="{y0}" stroke="#ddd"/>"##);
        let _ = writeln!(out, r##"<line x1="{x0}" y1="{gy:.1}" x2="{x1}" y2="{gy:.1}" stroke="#ddd"/>"##);
        let _ = writeln!(out, r#"<text x="{gx:.1}" y="{}" text-anchor="middle">{}</text>"#, y0 + 16.0, tick(vx));
        let _ = writeln!(out, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, x0 - 5.0, gy + 4.0, tick(vy));
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        0.5 * (x0 + x1),
        HEIGHT - 12.0,
        escape(xlabel)
    );
    let _ = writeln!(
        out,
        r#"<text x="15" y="{0}" text-anchor="middle" transform="rotate(-90 15 {0})">{1}</text>"#,
        0.5 * (y0 + y1),
        escape(ylabel)
    );
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.round() {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn polyline(out: &mut String, frame: &Frame, pts: &[(f64, f64)], colour: &str, width: f64, dash: bool) {
    let coords: Vec<String> = pts
        .iter()
        .filter(|p| p.0.is_finite() && p.1.is_finite())
        .map(|&(x, y)| format!("{:.1},{:.1}", frame.px(x), frame.py(y)))
        .collect();
    if coords.is_empty() {
        return;
    }
    let dash = if dash { r#" stroke-dasharray="5,4""# } else { "" };
    let _ = writeln!(
        out,
        r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="{width}"{dash}/>"#,
        coords.join(" ")
    );
}

fn legend(out: &mut String, row: usize, name: &str, colour: &str, dash: bool) {
    let x = WIDTH - MARGIN[1] + 12.0;
    let y = MARGIN[0] + 10.0 + 18.0 * row as f64;
    let dash = if dash { r#" stroke-dasharray="5,4""# } else { "" };
    let _ = writeln!(
        out,
        r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{colour}" stroke-width="2"{dash}/>"#,
        x + 20.0
    );
    let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, x + 26.0, y + 4.0, escape(name));
}

pub fn line_chart(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let frame = Frame::fit(series.iter().flat_map(|s| s.points.iter()), false);
    let mut out = String::new();
    header(&mut out, title, &frame, xlabel, ylabel);
    for (i, s) in series.iter().enumerate() {
        let colour = COLOURS[i % COLOURS.len()];
        polyline(&mut out, &frame, &s.points, colour, 1.8, s.dashed);
        legend(&mut out, i, &s.name, colour, s.dashed);
    }
    out.push_str("</svg>\n");
    out
}

/// Truth tracks in grey, estimated tracks in colour, equal axis scales.
pub fn xy_chart(title: &str, truth: &[Vec<(f64, f64)>], estimates: &[Vec<(f64, f64)>]) -> String {
    let frame = Frame::fit(truth.iter().chain(estimates).flatten(), true);
    let mut out = String::new();
    header(&mut out, title, &frame, "x (m)", "y (m)");
    for t in truth {
        polyline(&mut out, &frame, t, "#999", 3.0, false);
    }
    for (i, t) in estimates.iter().enumerate() {
        let colour = COLOURS[i % COLOURS.len()];
        polyline(&mut out, &frame, t, colour, 1.2, false);
        if let Some(&(x, y)) = t.first().filter(|p| p.0.is_finite() && p.1.is_finite()) {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.1}" cy="{:.1}" r="2.5" fill="{colour}"/>"#,
                frame.px(x),
                frame.py(y)
            );
        }
    }
    legend(&mut out, 0, "truth", "#999", false);
    legend(&mut out, 1, "estimates", COLOURS[0], false);
    out.push_str("</svg>\n");
    out
}
