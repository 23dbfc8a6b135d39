//! Minimal SVG line plots of a signal against its estimate.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 320.0;
const MARGIN: f64 = 30.0;

/// One polyline: legend label, stroke colour, values at equally spaced x.
pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub values: &'a [f64],
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Render the series on shared axes. Non-finite values are drawn as zero.
pub fn line_plot(title: &str, series: &[Series<'_>]) -> String {
    let clean = |v: f64| if v.is_finite() { v } else { 0.0 };
    let (mut lo, mut hi) = series
        .iter()
        .flat_map(|s| s.values.iter().copied().map(clean))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v), b.max(v))
        });
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        hi = lo + 1.0;
    }
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{MARGIN}" y="20" font-family="sans-serif" font-size="14">{}</text>"#,
        escape(title)
    );
    let _ = writeln!(
        out,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#999"/>"##
    );
    for (k, s) in series.iter().enumerate() {
        let count = s.values.len().max(2) - 1;
        let points: Vec<String> = s
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let x = MARGIN + plot_w * i as f64 / count as f64;
                let y = MARGIN + plot_h * (1.0 - (clean(v) - lo) / (hi - lo));
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            escape(s.color),
            points.join(" ")
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" fill="{}">{}</text>"#,
            WIDTH - MARGIN - 120.0,
            MARGIN + 16.0 * (k + 1) as f64,
            escape(s.color),
            escape(s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}
