//! Minimal hand-written SVG polyline charts for the logged scalar series
//! (no plotting dependency).

use crate::error::Result;
use std::io::Write;
use std::path::Path;

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 48.0;

/// Write a single-series line chart; non-finite values are skipped. A chart
/// with no finite points still produces a valid (empty) SVG.
pub fn line_chart(path: &Path, title: &str, ys: &[f64]) -> Result<()> {
    let pts: Vec<(usize, f64)> = ys
        .iter()
        .enumerate()
        .filter(|(_, y)| y.is_finite())
        .map(|(i, &y)| (i, y))
        .collect();
    let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(_, y) in &pts {
        ymin = ymin.min(y);
        ymax = ymax.max(y);
    }
    if !ymin.is_finite() {
        ymin = 0.0;
        ymax = 1.0;
    }
    if (ymax - ymin).abs() < 1e-300 {
        ymax = ymin + 1.0;
    }
    let n = ys.len().max(2) as f64;
    let sx = |i: usize| MARGIN + (W - 2.0 * MARGIN) * i as f64 / (n - 1.0);
    let sy = |y: f64| H - MARGIN - (H - 2.0 * MARGIN) * (y - ymin) / (ymax - ymin);
    let mut poly = String::new();
    for &(i, y) in &pts {
        poly.push_str(&format!("{:.2},{:.2} ", sx(i), sy(y)));
    }
    let mut f = std::fs::File::create(path)?;
    writeln!(
        f,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    )?;
    writeln!(f, r#"<rect width="{W}" height="{H}" fill="white"/>"#)?;
    writeln!(
        f,
        r#"<text x="{}" y="24" font-family="monospace" font-size="16">{}</text>"#,
        MARGIN, title
    )?;
    writeln!(
        f,
        r#"<line x1="{m}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/>"#,
        m = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN
    )?;
    writeln!(
        f,
        r#"<line x1="{m}" y1="{t}" x2="{m}" y2="{b}" stroke="black"/>"#,
        m = MARGIN,
        t = MARGIN,
        b = H - MARGIN
    )?;
    writeln!(
        f,
        r#"<text x="4" y="{}" font-family="monospace" font-size="11">{:.4e}</text>"#,
        MARGIN + 4.0,
        ymax
    )?;
    writeln!(
        f,
        r#"<text x="4" y="{}" font-family="monospace" font-size="11">{:.4e}</text>"#,
        H - MARGIN,
        ymin
    )?;
    if !poly.is_empty() {
        writeln!(
            f,
            r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="1.5"/>"#,
            poly.trim_end()
        )?;
    }
    writeln!(f, "</svg>")?;
    Ok(())
}
