//! Minimal SVG line charts: side-by-side panels sharing a y range, one
//! polyline per series with vertical interval bars.

use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    /// `(x, mean, half-width)`; non-finite points are skipped.
    pub points: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub title: String,
    pub series: Vec<Series>,
}

const COLORS: [&str; 7] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"];
const PANEL_W: f64 = 360.0;
const PANEL_H: f64 = 260.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 36.0;
const MARGIN_B: f64 = 48.0;
const LEGEND_H: f64 = 28.0;

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Tick positions covering `[lo, hi]` at a 1-2-5 step.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn label(v: f64) -> String {
    let s = format!("{:.4}", v);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    values.filter(|v| v.is_finite()).fold(None, |acc, v| match acc {
        None => Some((v, v)),
        Some((a, b)) => Some((a.min(v), b.max(v))),
    })
}

/// Renders the panels as one standalone SVG document.
pub fn line_chart(panels: &[Panel], x_label: &str, y_label: &str) -> String {
    let finite = |p: &&(f64, f64, f64)| p.0.is_finite() && p.1.is_finite();
    let points = || panels.iter().flat_map(|p| p.series.iter()).flat_map(|s| s.points.iter()).filter(finite);
    let (x0, x1) = range(points().map(|p| p.0)).unwrap_or((0.0, 1.0));
    let (y0, y1) = range(points().flat_map(|p| {
        let h = if p.2.is_finite() { p.2 } else { 0.0 };
        [p.1 - h, p.1 + h]
    }))
    .unwrap_or((0.0, 1.0));
    let pad = if y1 > y0 { 0.05 * (y1 - y0) } else { 0.5 * y0.abs().max(1.0) };
    let (y0, y1) = (y0 - pad, y1 + pad);
    let (x0, x1) = if x1 > x0 { (x0, x1) } else { (x0 - 1.0, x1 + 1.0) };

    let n = panels.len().max(1) as f64;
    let cell_w = MARGIN_L + PANEL_W + MARGIN_R;
    let width = cell_w * n;
    let height = MARGIN_T + PANEL_H + MARGIN_B + LEGEND_H;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    for (k, panel) in panels.iter().enumerate() {
        let left = k as f64 * cell_w + MARGIN_L;
        let top = MARGIN_T;
        let sx = |x: f64| left + (x - x0) / (x1 - x0) * PANEL_W;
        let sy = |y: f64| top + (y1 - y) / (y1 - y0) * PANEL_H;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">{}</text>"#,
            left + PANEL_W / 2.0,
            top - 14.0,
            escape(&panel.title)
        );
        let _ = writeln!(
            s,
            r##"<rect x="{left}" y="{top}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="#444"/>"##
        );
        for t in ticks(y0, y1) {
            let y = sy(t);
            let _ = writeln!(
                s,
                r##"<line x1="{left}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#ddd"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
                left + PANEL_W,
                left - 6.0,
                y + 4.0,
                label(t)
            );
        }
        let mut xs: Vec<f64> = points().map(|p| p.0).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        for x in xs {
            let px = sx(x);
            let _ = writeln!(
                s,
                r#"<text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#,
                top + PANEL_H + 18.0,
                label(x)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            left + PANEL_W / 2.0,
            top + PANEL_H + 38.0,
            escape(x_label)
        );
        let _ = writeln!(
            s,
            r#"<text transform="translate({},{}) rotate(-90)" text-anchor="middle">{}</text>"#,
            left - 48.0,
            top + PANEL_H / 2.0,
            escape(y_label)
        );
        for (i, series) in panel.series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let pts: Vec<&(f64, f64, f64)> = series.points.iter().filter(finite).collect();
            let path: Vec<String> = pts.iter().map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1))).collect();
            if path.len() > 1 {
                let _ = writeln!(
                    s,
                    r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                    path.join(" ")
                );
            }
            for p in pts {
                let (px, py) = (sx(p.0), sy(p.1));
                if p.2.is_finite() && p.2 > 0.0 {
                    let _ = writeln!(
                        s,
                        r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="{color}"/>"#,
                        sy(p.1 + p.2),
                        sy(p.1 - p.2)
                    );
                }
                let _ = writeln!(s, r#"<circle cx="{px:.2}" cy="{py:.2}" r="3" fill="{color}"/>"#);
            }
        }
    }
    // Legend along the bottom, from the first panel's series names.
    if let Some(first) = panels.first() {
        let y = height - LEGEND_H / 2.0;
        for (i, series) in first.series.iter().enumerate() {
            let x = MARGIN_L + i as f64 * 110.0;
            let color = COLORS[i % COLORS.len()];
            let _ = writeln!(
                s,
                r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
                x + 20.0,
                x + 26.0,
                y + 4.0,
                escape(&series.name)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}
