//! Minimal deterministic SVG emitter: axes, ticks, and one polyline per
//! curve in the parameter plane. CSV stays the canonical output; this is a
//! quick-look overlay.

use std::fmt::Write as _;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// One curve to draw: label and its (λ₁, λ₂) vertices.
pub struct SvgCurve {
    pub label: String,
    pub points: Vec<[f64; 2]>,
    pub closed: bool,
}

fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|&s| span / s <= 6.0)
        .unwrap_or(mag * 10.0);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

/// Render the overlay. `axis_labels` name the two plane parameters.
pub fn render(title: &str, axis_labels: [&str; 2], curves: &[SvgCurve]) -> String {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for curve in curves {
        for p in &curve.points {
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
    }
    if curves.iter().all(|c| c.points.is_empty()) {
        lo = [0.0, 0.0];
        hi = [1.0, 1.0];
    }
    for a in 0..2 {
        let pad = 0.05 * (hi[a] - lo[a]).max(1e-9);
        lo[a] -= pad;
        hi[a] += pad;
    }

    let sx = (WIDTH - 2.0 * MARGIN) / (hi[0] - lo[0]);
    let sy = (HEIGHT - 2.0 * MARGIN) / (hi[1] - lo[1]);
    let px = |x: f64| MARGIN + (x - lo[0]) * sx;
    let py = |y: f64| HEIGHT - MARGIN - (y - lo[1]) * sy;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="28" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        title
    );

    // Axes frame.
    let _ = writeln!(
        out,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    for t in nice_ticks(lo[0], hi[0]) {
        let x = px(t);
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{:.1}" x2="{x:.2}" y2="{:.1}" stroke="black"/>"#,
            HEIGHT - MARGIN,
            HEIGHT - MARGIN + 6.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{x:.2}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="middle">{t}</text>"#,
            HEIGHT - MARGIN + 20.0
        );
    }
    for t in nice_ticks(lo[1], hi[1]) {
        let y = py(t);
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" y1="{y:.2}" x2="{MARGIN}" y2="{y:.2}" stroke="black"/>"#,
            MARGIN - 6.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{t}</text>"#,
            MARGIN - 10.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 14.0,
        axis_labels[0]
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{:.1}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        axis_labels[1]
    );

    // Curves and legend.
    for (i, curve) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut d = String::new();
        for p in &curve.points {
            let _ = write!(d, "{:.3},{:.3} ", px(p[0]), py(p[1]));
        }
        if curve.closed {
            if let Some(p) = curve.points.first() {
                let _ = write!(d, "{:.3},{:.3} ", px(p[0]), py(p[1]));
            }
        }
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            d.trim_end()
        );
        let ly = MARGIN + 16.0 + 18.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#,
            WIDTH - MARGIN - 150.0,
            WIDTH - MARGIN - 126.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11">{}</text>"#,
            WIDTH - MARGIN - 120.0,
            ly + 4.0,
            curve.label
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_is_deterministic_and_well_formed() {
        let curves = vec![SvgCurve {
            label: "c0".to_string(),
            points: vec![[0.0, 0.0], [1.0, 0.5], [2.0, 0.0]],
            closed: true,
        }];
        let a = render("t", ["x", "y"], &curves);
        let b = render("t", ["x", "y"], &curves);
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.trim_end().ends_with("</svg>"));
        assert!(a.contains("polyline"));
    }

    #[test]
    fn empty_curve_set_still_renders_axes() {
        let s = render("empty", ["a", "b"], &[]);
        assert!(s.contains("<rect"));
    }
}
