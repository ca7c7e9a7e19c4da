//! Minimal SVG line charts for the analyze command. Plots are a convenience
//! view; they never feed back into any reported number.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;

const PALETTE: &[&str] = &[
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

pub struct Series {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub label: String,
    /// Draw point markers in addition to the line.
    pub markers: bool,
}

pub struct Chart<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub series: Vec<Series>,
    /// Provenance note embedded as an XML comment (data files, seed).
    pub provenance: String,
}

fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let raw = (hi - lo) / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|&s| s >= raw)
        .unwrap_or(mag * 10.0);
    let start = (lo / step).ceil() * step;
    let mut ticks = Vec::new();
    let mut t = start;
    while t <= hi + step * 1e-9 {
        ticks.push(t);
        t += step;
    }
    ticks
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if !(1e-3..1e4).contains(&a) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

impl Chart<'_> {
    pub fn render(&self) -> String {
        let (mut x_lo, mut x_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for s in &self.series {
            for &v in &s.x {
                x_lo = x_lo.min(v);
                x_hi = x_hi.max(v);
            }
            for &v in &s.y {
                y_lo = y_lo.min(v);
                y_hi = y_hi.max(v);
            }
        }
        if !x_lo.is_finite() {
            x_lo = 0.0;
            x_hi = 1.0;
        }
        if !y_lo.is_finite() {
            y_lo = 0.0;
            y_hi = 1.0;
        }
        if x_hi == x_lo {
            x_hi = x_lo + 1.0;
        }
        if y_hi == y_lo {
            y_hi = y_lo + 1.0;
        }
        let pad = (y_hi - y_lo) * 0.05;
        y_lo -= pad;
        y_hi += pad;

        let px = |x: f64| MARGIN_L + (x - x_lo) / (x_hi - x_lo) * (WIDTH - MARGIN_L - MARGIN_R);
        let py = |y: f64| {
            HEIGHT - MARGIN_B - (y - y_lo) / (y_hi - y_lo) * (HEIGHT - MARGIN_T - MARGIN_B)
        };

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
        );
        let _ = writeln!(svg, "<!-- {} -->", self.provenance.replace("--", "- -"));
        let _ = writeln!(
            svg,
            r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
            WIDTH / 2.0,
            xml_escape(self.title)
        );

        // axes
        let _ = writeln!(
            svg,
            r#"<line x1="{MARGIN_L}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/>"#,
            HEIGHT - MARGIN_B,
            WIDTH - MARGIN_R
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{MARGIN_L}" y1="{MARGIN_T}" x2="{MARGIN_L}" y2="{}" stroke="black"/>"#,
            HEIGHT - MARGIN_B
        );
        for t in nice_ticks(x_lo, x_hi, 6) {
            let x = px(t);
            let _ = writeln!(
                svg,
                r#"<line x1="{x}" y1="{0}" x2="{x}" y2="{1}" stroke="black"/><text x="{x}" y="{2}" text-anchor="middle" font-family="sans-serif" font-size="11">{3}</text>"#,
                HEIGHT - MARGIN_B,
                HEIGHT - MARGIN_B + 5.0,
                HEIGHT - MARGIN_B + 18.0,
                fmt_tick(t)
            );
        }
        for t in nice_ticks(y_lo, y_hi, 6) {
            let y = py(t);
            let _ = writeln!(
                svg,
                r#"<line x1="{0}" y1="{y}" x2="{MARGIN_L}" y2="{y}" stroke="black"/><text x="{1}" y="{2}" text-anchor="end" font-family="sans-serif" font-size="11">{3}</text>"#,
                MARGIN_L - 5.0,
                MARGIN_L - 8.0,
                y + 4.0,
                fmt_tick(t)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13">{}</text>"#,
            (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
            HEIGHT - 12.0,
            xml_escape(self.x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text x="18" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13" transform="rotate(-90 18 {0})">{1}</text>"#,
            (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
            xml_escape(self.y_label)
        );

        for (i, s) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let mut d = String::new();
            for (k, (&x, &y)) in s.x.iter().zip(&s.y).enumerate() {
                let _ = write!(
                    d,
                    "{}{:.2},{:.2} ",
                    if k == 0 { "M" } else { "L" },
                    px(x),
                    py(y)
                );
            }
            let _ = writeln!(
                svg,
                r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.5"/>"#
            );
            if s.markers {
                for (&x, &y) in s.x.iter().zip(&s.y) {
                    let _ = writeln!(
                        svg,
                        r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                        px(x),
                        py(y)
                    );
                }
            }
            if !s.label.is_empty() {
                let _ = writeln!(
                    svg,
                    r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" fill="{color}">{}</text>"#,
                    WIDTH - MARGIN_R - 180.0,
                    MARGIN_T + 16.0 * (i + 1) as f64,
                    xml_escape(&s.label)
                );
            }
        }
        svg.push_str("</svg>\n");
        svg
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        fs::write(path, self.render())
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_valid_svg_with_provenance() {
        let chart = Chart {
            title: "visibility vs delay",
            x_label: "delay (ps)",
            y_label: "V",
            series: vec![Series {
                x: vec![0.5, 1.0, 2.0],
                y: vec![0.9, 0.8, 0.6],
                label: "data".into(),
                markers: true,
            }],
            provenance: "source: run-1, seed 7".into(),
        };
        let svg = chart.render();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("seed 7"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn tick_generation_is_sane() {
        let t = nice_ticks(0.0, 4.0, 6);
        assert!(t.len() >= 4 && t.len() <= 10);
        assert!(t.windows(2).all(|w| w[1] > w[0]));
    }
}
