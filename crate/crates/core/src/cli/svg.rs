// SPDX-License-Identifier: MIT OR Apache-2.0

//! Minimal SVG writers for heatmaps and line plots.

use std::fmt::Write;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// White-to-purple ramp for values in `[lo, hi]`.
fn ramp(v: f64, lo: f64, hi: f64) -> String {
    let t = if hi > lo { ((v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 };
    let mix = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(255.0, 84.0), mix(255.0, 39.0), mix(255.0, 143.0))
}

/// Heatmap with `rows` layers (drawn bottom-up) and `cols` token positions.
pub fn heatmap(title: &str, values: &[f64], rows: usize, cols: usize, col_labels: &[String]) -> String {
    let cell = 36.0;
    let (left, top, bottom) = (48.0, 36.0, 90.0);
    let width = left + cell * cols as f64 + 90.0;
    let height = top + cell * rows as f64 + bottom;
    let lo = values.iter().copied().fold(0.0f64, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(1e-12);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<text x="{left}" y="20" font-size="13">{}</text>"#, esc(title));
    for r in 0..rows {
        let y = top + cell * (rows - 1 - r) as f64;
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{r}</text>"#, left - 6.0, y + cell / 2.0 + 4.0);
        for c in 0..cols {
            let v = values[r * cols + c];
            let x = left + cell * c as f64;
            let _ = writeln!(
                s,
                r#"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{}"><title>layer {r}, position {c}: {v:.4}</title></rect>"#,
                ramp(v, lo, hi)
            );
        }
    }
    for (c, label) in col_labels.iter().enumerate().take(cols) {
        let x = left + cell * c as f64 + cell / 2.0;
        let y = top + cell * rows as f64 + 10.0;
        let _ = writeln!(s, r#"<text x="{x}" y="{y}" transform="rotate(45 {x} {y})">{}</text>"#, esc(label));
    }
    let lx = left + cell * cols as f64 + 16.0;
    let _ = writeln!(s, r#"<rect x="{lx}" y="{top}" width="14" height="14" fill="{}"/><text x="{}" y="{}">{hi:.2}</text>"#, ramp(hi, lo, hi), lx + 18.0, top + 11.0);
    let _ = writeln!(s, r##"<rect x="{lx}" y="{}" width="14" height="14" fill="{}" stroke="#999"/><text x="{}" y="{}">{lo:.2}</text>"##, top + 20.0, ramp(lo, lo, hi), lx + 18.0, top + 31.0);
    s.push_str("</svg>\n");
    s
}

pub struct Series<'a> {
    pub name: &'a str,
    pub values: &'a [f64],
    pub color: &'a str,
}

/// Line plot over integer x positions `xs`, with optional dashed reference
/// lines `(label, y)`.
pub fn line_plot(title: &str, x_label: &str, xs: &[usize], series: &[Series<'_>], refs: &[(&str, f64)]) -> String {
    let (w, h) = (520.0, 320.0);
    let (left, right, top, bottom) = (56.0, 130.0, 36.0, 48.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let ymin = series.iter().flat_map(|s| s.values.iter()).chain(refs.iter().map(|r| &r.1)).copied().fold(0.0f64, f64::min);
    let ymax = series.iter().flat_map(|s| s.values.iter()).chain(refs.iter().map(|r| &r.1)).copied().fold(1e-9f64, f64::max);
    let (x0, x1) = (xs.first().copied().unwrap_or(0) as f64, xs.last().copied().unwrap_or(1) as f64);
    let sx = |x: f64| left + if x1 > x0 { (x - x0) / (x1 - x0) * pw } else { pw / 2.0 };
    let sy = |y: f64| top + ph - (y - ymin) / (ymax - ymin) * ph;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<text x="{left}" y="20" font-size="13">{}</text>"#, esc(title));
    let _ = writeln!(s, r##"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##);
    for &x in xs {
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{x}</text>"#, sx(x as f64), top + ph + 14.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, left + pw / 2.0, h - 10.0, esc(x_label));
    for k in 0..=4 {
        let y = ymin + (ymax - ymin) * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{y:.2}</text>"#, left - 6.0, sy(y) + 4.0);
    }
    for (i, (label, y)) in refs.iter().enumerate() {
        let _ = writeln!(
            s,
            r##"<line x1="{left}" x2="{}" y1="{yy}" y2="{yy}" stroke="#888" stroke-dasharray="5,4"/><text x="{}" y="{}" fill="#666">{}</text>"##,
            left + pw,
            left + pw + 8.0,
            sy(*y) + 4.0 + 12.0 * i as f64,
            esc(label),
            yy = sy(*y)
        );
    }
    for (i, se) in series.iter().enumerate() {
        let pts: Vec<String> = xs.iter().zip(se.values).map(|(&x, &y)| format!("{:.2},{:.2}", sx(x as f64), sy(y))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{}" stroke-width="2" points="{}"/>"#, se.color, pts.join(" "));
        let ly = top + 14.0 * i as f64 + 30.0;
        let _ = writeln!(s, r#"<rect x="{}" y="{}" width="10" height="3" fill="{}"/><text x="{}" y="{}">{}</text>"#, left + pw + 8.0, ly + 60.0, se.color, left + pw + 22.0, ly + 64.0, esc(se.name));
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heatmap_has_one_rect_per_cell() {
        let svg = heatmap("t", &[0.0, 0.5, 1.0, 0.2, 0.3, 0.1], 2, 3, &["a".into(), "b".into(), "<c>".into()]);
        assert_eq!(svg.matches("<rect").count(), 6 + 2);
        assert!(svg.contains("&lt;c&gt;"));
    }

    #[test]
    fn plot_is_deterministic() {
        let xs = [0, 1, 2];
        let a = line_plot("p", "layer", &xs, &[Series { name: "s", values: &[0.1, 0.4, 0.2], color: "red" }], &[("ref", 0.3)]);
        let b = line_plot("p", "layer", &xs, &[Series { name: "s", values: &[0.1, 0.4, 0.2], color: "red" }], &[("ref", 0.3)]);
        assert_eq!(a, b);
        assert!(a.contains("polyline"));
    }
}
