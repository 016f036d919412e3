//! Minimal standalone SVG step plots.

use std::fmt::Write;

const SIZE: f64 = 600.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn px(x: f64) -> f64 {
    MARGIN + x * SIZE
}

fn py(y: f64) -> f64 {
    MARGIN + (1.0 - y) * SIZE
}

/// Step functions on the unit square with the identity diagonal.
///
/// Each series is a list of `(x, y)` jump points: the curve starts at
/// `(0, 0)`, holds its value until each `x` and jumps to `y`, and finishes at
/// `(1, 1)`.
pub fn step_plot(title: &str, series: &[Vec<(f64, f64)>]) -> String {
    let total = SIZE + 2.0 * MARGIN;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total}" height="{total}" viewBox="0 0 {total} {total}">"#
    );
    let _ = writeln!(s, r#"<title>{}</title>"#, escape(title));
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{SIZE}" height="{SIZE}" fill="none" stroke="black"/>"#
    );
    for tick in 0..=4 {
        let v = f64::from(tick) / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">{v}</text>"#,
            px(v),
            py(0.0) + 18.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="end">{v}</text>"#,
            px(0.0) - 6.0,
            py(v) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="gray" stroke-dasharray="4 4"/>"#,
        px(0.0),
        py(0.0),
        px(1.0),
        py(1.0)
    );
    for (i, points) in series.iter().enumerate() {
        let mut d = format!("M{:.3} {:.3}", px(0.0), py(0.0));
        for &(x, y) in points {
            let _ = write!(d, "H{:.3}V{:.3}", px(x), py(y));
        }
        let _ = write!(d, "H{:.3}V{:.3}", px(1.0), py(1.0));
        let _ = writeln!(
            s,
            r#"<path class="step" d="{d}" fill="none" stroke="{}" stroke-width="1"/>"#,
            COLORS[i % COLORS.len()]
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
