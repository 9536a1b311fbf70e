//! Minimal SVG charts written next to the CSV data they show.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::evaluate::{HistogramBin, Quartiles};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

#[derive(Debug, Clone, PartialEq)]
pub enum Series {
    Line { label: String, points: Vec<(f64, f64)> },
    Scatter { label: String, points: Vec<(f64, f64)> },
}

impl Series {
    fn points(&self) -> &[(f64, f64)] {
        match self {
            Series::Line { points, .. } | Series::Scatter { points, .. } => points,
        }
    }

    fn label(&self) -> &str {
        match self {
            Series::Line { label, .. } | Series::Scatter { label, .. } => label,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn fit(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
        let range = |it: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = it
                .filter(|v| v.is_finite())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            match (lo.is_finite(), hi > lo) {
                (false, _) => (0.0, 1.0),
                (true, false) => (lo - 0.5, lo + 0.5),
                (true, true) => (lo, hi),
            }
        };
        let (x0, x1) = range(&mut xs.clone());
        let (y0, y1) = range(&mut ys.clone());
        Self { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, title: &str, x_label: &str, y_label: &str, f: &Frame) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        out,
        r#"<path d="M{l} {t} L{l} {b} L{r} {b}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
    for (x, anchor) in [(f.x0, "start"), (f.x1, "end")] {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="{anchor}">{}</text>"#,
            f.px(x),
            b + 14.0,
            tick(x)
        );
    }
    for y in [f.y0, f.y1] {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            l - 4.0,
            f.py(y) + 4.0,
            tick(y)
        );
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{}", (v * 100.0).round() / 100.0)
    }
}

pub fn xy_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let all = series.iter().flat_map(|s| s.points().iter().copied());
    let frame = Frame::fit(all.clone().map(|p| p.0), all.map(|p| p.1));
    let mut out = String::new();
    header(&mut out, title, x_label, y_label, &frame);
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        match s {
            Series::Line { points, .. } => {
                let mut d = String::new();
                for (k, (x, y)) in points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()).enumerate() {
                    let _ = write!(d, "{}{:.2} {:.2} ", if k == 0 { 'M' } else { 'L' }, frame.px(*x), frame.py(*y));
                }
                let _ = writeln!(out, r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, d.trim_end());
            }
            Series::Scatter { points, .. } => {
                for (x, y) in points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
                    let _ = writeln!(
                        out,
                        r#"<circle cx="{:.2}" cy="{:.2}" r="1.5" fill="{color}" fill-opacity="0.6"/>"#,
                        frame.px(*x),
                        frame.py(*y)
                    );
                }
            }
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            WIDTH - MARGIN - 120.0,
            MARGIN + 14.0 * i as f64,
            escape(s.label())
        );
    }
    out.push_str("</svg>\n");
    out
}

pub fn histogram_chart(title: &str, x_label: &str, bins: &[HistogramBin]) -> String {
    let frame = Frame::fit(
        bins.iter().flat_map(|b| [b.lo, b.hi]),
        bins.iter().map(|b| b.count as f64).chain([0.0]),
    );
    let mut out = String::new();
    header(&mut out, title, x_label, "count", &frame);
    for b in bins {
        let (x, w) = (frame.px(b.lo), frame.px(b.hi) - frame.px(b.lo));
        let (y, h) = (frame.py(b.count as f64), frame.py(0.0) - frame.py(b.count as f64));
        let _ = writeln!(
            out,
            r##"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="#1f77b4" stroke="white"/>"##
        );
    }
    out.push_str("</svg>\n");
    out
}

/// One box per group: whiskers at min/max, box at the quartiles.
pub fn box_chart(title: &str, x_label: &str, y_label: &str, groups: &[(f64, Quartiles, f64, f64)]) -> String {
    let frame = Frame::fit(
        groups.iter().map(|g| g.0).chain(groups.first().map(|g| g.0 - 0.1)).chain(groups.last().map(|g| g.0 + 0.1)),
        groups.iter().flat_map(|g| [g.2, g.3]),
    );
    let mut out = String::new();
    header(&mut out, title, x_label, y_label, &frame);
    for (x, q, lo, hi) in groups {
        let cx = frame.px(*x);
        let half = 10.0;
        let _ = writeln!(
            out,
            r#"<line x1="{cx:.2}" x2="{cx:.2}" y1="{:.2}" y2="{:.2}" stroke="black"/>"#,
            frame.py(*lo),
            frame.py(*hi)
        );
        let _ = writeln!(
            out,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#9ecae1" stroke="black"/>"##,
            cx - half,
            frame.py(q.q3),
            2.0 * half,
            (frame.py(q.q1) - frame.py(q.q3)).max(0.5)
        );
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" x2="{:.2}" y1="{m:.2}" y2="{m:.2}" stroke="red"/>"#,
            cx - half,
            cx + half,
            m = frame.py(q.median)
        );
    }
    out.push_str("</svg>\n");
    out
}

pub fn save(path: impl AsRef<Path>, svg: &str) -> Result<()> {
    std::fs::write(path, svg)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_are_well_formed() {
        let s = xy_chart(
            "fit <demo>",
            "L",
            "S",
            &[
                Series::Scatter {
                    label: "data".into(),
                    points: vec![(0.0, 1.0), (1.0, 2.0), (f64::NAN, 3.0)],
                },
                Series::Line {
                    label: "model".into(),
                    points: vec![(0.0, 1.0), (1.0, 2.0)],
                },
            ],
        );
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert_eq!(s.matches("<circle").count(), 2);
        assert!(s.contains("fit &lt;demo&gt;"));

        let bins = [
            HistogramBin { lo: -25.0, hi: 25.0, count: 3 },
            HistogramBin { lo: 25.0, hi: 75.0, count: 1 },
        ];
        assert_eq!(histogram_chart("h", "d", &bins).matches("<rect").count(), 3);

        let q = Quartiles { q1: 1.0, median: 2.0, q3: 3.0 };
        let b = box_chart("b", "f", "rmse", &[(0.2, q, 0.5, 4.0), (0.8, q, 1.5, 2.5)]);
        assert_eq!(b.matches("<rect").count(), 3);
    }

    #[test]
    fn empty_input_still_renders() {
        let s = xy_chart("", "", "", &[]);
        assert!(s.contains("</svg>"));
        assert!(!histogram_chart("", "", &[]).contains("NaN"));
    }
}
