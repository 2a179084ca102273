//! Minimal deterministic SVG charts: line series, vertical event markers and
//! scatter plots of region masks. Coordinates are printed with two decimals,
//! so equal inputs give byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::Result;
use crate::grid::Grid;
use crate::policy::RegionMask;
use crate::sde::Trajectory;

const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub color: String,
    pub dashed: bool,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Marker {
    pub x: f64,
    pub label: String,
    pub color: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub width: f64,
    pub height: f64,
    pub series: Vec<Series>,
    pub markers: Vec<Marker>,
    /// Fixed `(min, max)` ranges; computed from the data when `None`.
    pub x_range: Option<(f64, f64)>,
    pub y_range: Option<(f64, f64)>,
}

impl LineChart {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        LineChart {
            title: title.to_string(),
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
            width: 720.0,
            height: 420.0,
            series: Vec::new(),
            markers: Vec::new(),
            x_range: None,
            y_range: None,
        }
    }

    fn ranges(&self) -> ((f64, f64), (f64, f64)) {
        let pts = || self.series.iter().flat_map(|s| s.points.iter());
        let span = |lo: f64, hi: f64| if lo.is_finite() && hi > lo { (lo, hi) } else { (0.0, 1.0) };
        let x = self.x_range.unwrap_or_else(|| {
            let lo = pts().map(|p| p.0).fold(f64::INFINITY, f64::min);
            let hi = pts().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
            span(lo, hi)
        });
        let y = self.y_range.unwrap_or_else(|| {
            let hi = pts().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
            let lo = pts().map(|p| p.1).fold(f64::INFINITY, f64::min).min(0.0);
            span(lo, hi)
        });
        (x, y)
    }

    pub fn render(&self) -> String {
        let ((x0, x1), (y0, y1)) = self.ranges();
        let pw = self.width - MARGIN_LEFT - MARGIN_RIGHT;
        let ph = self.height - MARGIN_TOP - MARGIN_BOTTOM;
        let px = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * pw;
        let py = |y: f64| MARGIN_TOP + ph - (y - y0) / (y1 - y0) * ph;
        let mut out = header(self.width, self.height, &self.title);
        axes(&mut out, (x0, x1), (y0, y1), &px, &py, self.height, &self.x_label, &self.y_label);

        for m in &self.markers {
            if m.x < x0 || m.x > x1 {
                continue;
            }
            let _ = writeln!(
                out,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{}" stroke-dasharray="2,3"/>"#,
                px(m.x),
                py(y1),
                px(m.x),
                py(y0),
                m.color
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" font-size="10" fill="{}">{}</text>"#,
                px(m.x) + 2.0,
                py(y1) + 10.0,
                m.color,
                escape(&m.label)
            );
        }
        for (k, s) in self.series.iter().enumerate() {
            let mut d = String::new();
            for (j, &(x, y)) in s.points.iter().enumerate() {
                let _ = write!(d, "{}{:.2},{:.2}", if j == 0 { "M" } else { " L" }, px(x), py(y));
            }
            let dash = if s.dashed { r#" stroke-dasharray="6,4""# } else { "" };
            let _ = writeln!(out, r#"<path d="{d}" fill="none" stroke="{}" stroke-width="1.5"{dash}/>"#, s.color);
            let ly = MARGIN_TOP + 14.0 * k as f64;
            let lx = self.width - MARGIN_RIGHT + 10.0;
            let _ = writeln!(
                out,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{}" stroke-width="1.5"{dash}/>"#,
                lx,
                ly,
                lx + 20.0,
                ly,
                s.color
            );
            let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" font-size="11">{}</text>"#, lx + 25.0, ly + 4.0, escape(&s.label));
        }
        out.push_str("</svg>\n");
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.render())?;
        Ok(())
    }
}

fn header(width: f64, height: f64, title: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{:.2}" y="24" font-size="14" text-anchor="middle">{}</text>"#, width / 2.0, escape(title));
    out
}

#[allow(clippy::too_many_arguments)]
fn axes(
    out: &mut String,
    (x0, x1): (f64, f64),
    (y0, y1): (f64, f64),
    px: &dyn Fn(f64) -> f64,
    py: &dyn Fn(f64) -> f64,
    height: f64,
    x_label: &str,
    y_label: &str,
) {
    let _ = writeln!(
        out,
        r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        px(x0),
        py(y1),
        px(x1) - px(x0),
        py(y0) - py(y1)
    );
    for t in 0..=5 {
        let f = t as f64 / 5.0;
        let (x, y) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="middle">{}</text>"#,
            px(x),
            py(y0) + 14.0,
            tick(x)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end">{}</text>"#,
            px(x0) - 4.0,
            py(y) + 3.0,
            tick(y)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">{}</text>"#,
        (px(x0) + px(x1)) / 2.0,
        height - 12.0,
        escape(x_label)
    );
    let cy = (py(y0) + py(y1)) / 2.0;
    let _ = writeln!(
        out,
        r#"<text x="14" y="{cy:.2}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {cy:.2})">{}</text>"#,
        escape(y_label)
    );
}

fn tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.to_string() }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// `S` and `I` of a controlled path, optionally overlaid with an
/// uncontrolled one (dashed), with owner switches and attack flips as
/// vertical markers.
pub fn trajectory_chart(title: &str, controlled: &Trajectory, uncontrolled: Option<&Trajectory>) -> LineChart {
    let mut chart = LineChart::new(title, "t (days)", "fraction");
    chart.y_range = Some((0.0, 1.0));
    let line = |t: &Trajectory, v: &[f64]| t.times.iter().copied().zip(v.iter().copied()).collect::<Vec<_>>();
    chart.series.push(Series { label: "S".into(), color: "#1f77b4".into(), dashed: false, points: line(controlled, &controlled.s) });
    chart.series.push(Series { label: "I".into(), color: "#d62728".into(), dashed: false, points: line(controlled, &controlled.i) });
    if let Some(u) = uncontrolled {
        chart.series.push(Series { label: "S, no control".into(), color: "#1f77b4".into(), dashed: true, points: line(u, &u.s) });
        chart.series.push(Series { label: "I, no control".into(), color: "#d62728".into(), dashed: true, points: line(u, &u.i) });
    }
    for e in &controlled.protection_switches {
        chart.markers.push(Marker { x: e.time, label: format!("p {}→{}", e.from, e.to), color: "#2ca02c".into() });
    }
    for e in &controlled.attack_switches {
        chart.markers.push(Marker { x: e.time, label: format!("a {}→{}", e.from, e.to), color: "#9467bd".into() });
    }
    chart
}

/// Scatter of the nodes of `mask` on the triangle, switching nodes filled.
pub fn region_chart(title: &str, mask: &RegionMask) -> Result<String> {
    let grid = Grid::new(mask.n)?;
    let (width, height) = (520.0, 520.0);
    let side = width - MARGIN_LEFT - MARGIN_RIGHT.min(60.0);
    let px = |s: f64| MARGIN_LEFT + s * side;
    let py = |i: f64| MARGIN_TOP + side - i * side;
    let mut out = header(width, height, title);
    axes(&mut out, (0.0, 1.0), (0.0, 1.0), &px, &py, height, "s", "i");
    let r = (side / mask.n as f64 * 0.35).clamp(0.8, 6.0);
    for ((j, k), &inside) in grid.nodes().zip(&mask.in_region) {
        let st = grid.state(j, k);
        let fill = if inside { "#d62728" } else { "#dddddd" };
        let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="{r:.2}" fill="{fill}"/>"#, px(st.s), py(st.i));
    }
    out.push_str("</svg>\n");
    Ok(out)
}
