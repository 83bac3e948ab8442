//! Minimal SVG line and scatter plots.

use std::fmt::Write;

const W: f64 = 720.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Default)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub lines: Vec<Series>,
    /// Scatter groups, one colour each.
    pub scatter: Vec<Series>,
    pub h_rules: Vec<(String, f64)>,
    pub v_rules: Vec<(String, f64)>,
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    log_y: bool,
}

impl Frame {
    fn ty(&self, y: f64) -> f64 {
        if self.log_y { y.max(f64::MIN_POSITIVE).log10() } else { y }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (self.ty(y) - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Plot {
    fn frame(&self) -> Frame {
        let pts = self.lines.iter().chain(&self.scatter).flat_map(|s| s.points.iter());
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        let ty = |y: f64| if self.log_y { y.max(f64::MIN_POSITIVE).log10() } else { y };
        for &(x, y) in pts.filter(|p| p.0.is_finite() && p.1.is_finite()) {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(ty(y));
            y1 = y1.max(ty(y));
        }
        for (_, y) in self.h_rules.iter().filter(|r| r.1.is_finite()) {
            y0 = y0.min(ty(*y));
            y1 = y1.max(ty(*y));
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if x1 <= x0 {
            x1 = x0 + 1.0;
        }
        if y1 <= y0 {
            y1 = y0 + 1.0;
        }
        let pad = 0.05 * (y1 - y0);
        Frame { x0, x1, y0: y0 - pad, y1: y1 + pad, log_y: self.log_y }
    }

    pub fn render(&self) -> String {
        let f = self.frame();
        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, W / 2.0, escape(&self.title));
        let (l, r, t, b) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
        let _ = writeln!(s, r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#, r - l, b - t);
        for i in 0..=4 {
            let fx = f.x0 + (f.x1 - f.x0) * i as f64 / 4.0;
            let fy = f.y0 + (f.y1 - f.y0) * i as f64 / 4.0;
            let label_y = if f.log_y { 10f64.powf(fy) } else { fy };
            let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#, f.px(fx), b + 16.0, sig3(fx));
            let py = b - (fy - f.y0) / (f.y1 - f.y0) * (b - t);
            let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, l - 4.0, py + 4.0, sig3(label_y));
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (l + r) / 2.0, H - 12.0, escape(&self.x_label));
        let _ = writeln!(
            s,
            r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
            (t + b) / 2.0,
            escape(&self.y_label)
        );
        for (label, y) in &self.h_rules {
            let py = f.py(*y);
            let _ = writeln!(s, r##"<line x1="{l}" y1="{py:.1}" x2="{r}" y2="{py:.1}" stroke="#444" stroke-dasharray="6 4"/>"##);
            let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, r - 4.0, py - 4.0, escape(label));
        }
        for (label, x) in &self.v_rules {
            let px = f.px(*x);
            let _ = writeln!(s, r##"<line x1="{px:.1}" y1="{t}" x2="{px:.1}" y2="{b}" stroke="#888" stroke-dasharray="2 3"/>"##);
            let _ = writeln!(s, r#"<text x="{:.1}" y="{}" >{}</text>"#, px + 3.0, t + 12.0, escape(label));
        }
        let mut legend = 0;
        for (i, series) in self.lines.iter().enumerate() {
            let c = PALETTE[i % PALETTE.len()];
            let pts: Vec<String> = series
                .points
                .iter()
                .filter(|p| p.0.is_finite() && p.1.is_finite())
                .map(|&(x, y)| format!("{:.1},{:.1}", f.px(x), f.py(y)))
                .collect();
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
            legend_entry(&mut s, legend, c, &series.label);
            legend += 1;
        }
        for (i, series) in self.scatter.iter().enumerate() {
            let c = PALETTE[(i + self.lines.len()) % PALETTE.len()];
            for &(x, y) in series.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
                let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="1.6" fill="{c}" fill-opacity="0.6"/>"#, f.px(x), f.py(y));
            }
            legend_entry(&mut s, legend, c, &series.label);
            legend += 1;
        }
        s.push_str("</svg>\n");
        s
    }
}

fn legend_entry(s: &mut String, i: usize, colour: &str, label: &str) {
    let y = TOP + 14.0 + 16.0 * i as f64;
    let _ = writeln!(s, r#"<rect x="{}" y="{}" width="10" height="10" fill="{colour}"/>"#, LEFT + 8.0, y - 9.0);
    let _ = writeln!(s, r#"<text x="{}" y="{y}">{}</text>"#, LEFT + 22.0, escape(label));
}

fn sig3(x: f64) -> String {
    if x == 0.0 || (1e-3..1e5).contains(&x.abs()) {
        let s = format!("{x:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{x:.2e}")
    }
}
