//! Self-contained SVG plots: line charts and step histograms with a fixed
//! layout, fixed-precision coordinates and no timestamps or random ids, so
//! identical data always produces identical bytes.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 76.0;
const RIGHT: f64 = WIDTH - 24.0;
const TOP: f64 = 44.0;
const BOTTOM: f64 = HEIGHT - 58.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

/// One labeled polyline.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn line(label: &str, points: Vec<(f64, f64)>) -> Series {
        Series {
            label: label.to_string(),
            points,
        }
    }

    /// Histogram outline: each bin `[l, r)` with height `v` contributes the
    /// two corners `(l, v), (r, v)`, giving the usual step curve.
    pub fn step(label: &str, edges: &[(f64, f64)], values: &[f64]) -> Series {
        let mut points = Vec::with_capacity(2 * values.len());
        for (&(l, r), &v) in edges.iter().zip(values.iter()) {
            points.push((l, v));
            points.push((r, v));
        }
        Series::line(label, points)
    }

    /// Horizontal reference line over `[x0, x1]`.
    pub fn hline(label: &str, x0: f64, x1: f64, y: f64) -> Series {
        Series::line(label, vec![(x0, y), (x1, y)])
    }
}

fn finite_points(s: &Series) -> impl Iterator<Item = (f64, f64)> + '_ {
    s.points
        .iter()
        .copied()
        .filter(|(x, y)| x.is_finite() && y.is_finite())
}

/// Data ranges padded by 4%, widened when degenerate so the mapping is
/// always well defined.
fn ranges(series: &[Series]) -> ((f64, f64), (f64, f64)) {
    let mut xr = (f64::INFINITY, f64::NEG_INFINITY);
    let mut yr = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for (x, y) in finite_points(s) {
            xr = (xr.0.min(x), xr.1.max(x));
            yr = (yr.0.min(y), yr.1.max(y));
        }
    }
    let widen = |(lo, hi): (f64, f64)| {
        if lo > hi {
            return (0.0, 1.0);
        }
        let span = hi - lo;
        if span <= 0.0 {
            let pad = lo.abs().max(1.0) * 0.1;
            (lo - pad, hi + pad)
        } else {
            (lo - 0.04 * span, hi + 0.04 * span)
        }
    };
    (widen(xr), widen(yr))
}

/// Tick label: plain decimal in the mid range, scientific outside it,
/// trailing zeros trimmed.
fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    let mut s = if !(1e-3..1e5).contains(&a) {
        format!("{v:.2e}")
    } else {
        format!("{v:.4}")
    };
    if s.contains('.') && !s.contains('e') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders a line chart to an SVG string.
pub fn render(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let ((x0, x1), (y0, y1)) = ranges(series);
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * (RIGHT - LEFT);
    let py = |y: f64| BOTTOM - (y - y0) / (y1 - y0) * (BOTTOM - TOP);

    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"monospace\" font-size=\"13\">"
    );
    let _ = writeln!(
        out,
        "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"#ffffff\"/>"
    );
    let _ = writeln!(
        out,
        "<rect x=\"{LEFT}\" y=\"{TOP}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"#444444\"/>",
        RIGHT - LEFT,
        BOTTOM - TOP
    );
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>",
        (LEFT + RIGHT) / 2.0,
        xml_escape(title)
    );
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
        (LEFT + RIGHT) / 2.0,
        HEIGHT - 16.0,
        xml_escape(x_label)
    );
    let _ = writeln!(
        out,
        "<text x=\"18\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {:.2})\">{}</text>",
        (TOP + BOTTOM) / 2.0,
        (TOP + BOTTOM) / 2.0,
        xml_escape(y_label)
    );

    for i in 0..=5 {
        let f = i as f64 / 5.0;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let gx = px(xv);
        let gy = py(yv);
        let _ = writeln!(
            out,
            "<line x1=\"{gx:.2}\" y1=\"{BOTTOM}\" x2=\"{gx:.2}\" y2=\"{:.2}\" stroke=\"#444444\"/>",
            BOTTOM + 5.0
        );
        let _ = writeln!(
            out,
            "<text x=\"{gx:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
            BOTTOM + 20.0,
            tick_label(xv)
        );
        let _ = writeln!(
            out,
            "<line x1=\"{:.2}\" y1=\"{gy:.2}\" x2=\"{LEFT}\" y2=\"{gy:.2}\" stroke=\"#444444\"/>",
            LEFT - 5.0
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{gy:.2}\" text-anchor=\"end\" dominant-baseline=\"middle\">{}</text>",
            LEFT - 9.0,
            tick_label(yv)
        );
    }

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut path = String::new();
        for (x, y) in finite_points(s) {
            path.push_str(if path.is_empty() { "M" } else { " L" });
            let _ = write!(path, "{:.2} {:.2}", px(x), py(y));
        }
        let _ = writeln!(
            out,
            "<path d=\"{path}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.6\"/>"
        );
        let ly = TOP + 16.0 + 18.0 * i as f64;
        let _ = writeln!(
            out,
            "<line x1=\"{:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" stroke=\"{color}\" stroke-width=\"1.6\"/>",
            LEFT + 10.0,
            LEFT + 34.0
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\">{}</text>",
            LEFT + 40.0,
            ly + 4.0,
            xml_escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Writes [`render`] to `path`, creating parent directories.
pub fn line_plot(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, render(title, x_label, y_label, series))
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_is_deterministic_and_well_formed() {
        let series = vec![
            Series::line("sin", (0..50).map(|i| {
                let x = i as f64 * 0.1;
                (x, x.sin())
            }).collect()),
            Series::hline("zero", 0.0, 4.9, 0.0),
        ];
        let a = render("waves", "t", "value", &series);
        let b = render("waves", "t", "value", &series);
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.trim_end().ends_with("</svg>"));
        assert!(a.contains("sin"));
        assert!(!a.to_lowercase().contains("date"));
    }

    #[test]
    fn step_series_doubles_the_bins() {
        let edges = [(0.0, 0.5), (0.5, 1.0)];
        let s = Series::step("h", &edges, &[2.0, 3.0]);
        assert_eq!(s.points, vec![(0.0, 2.0), (0.5, 2.0), (0.5, 3.0), (1.0, 3.0)]);
    }

    #[test]
    fn degenerate_ranges_still_render() {
        let s = vec![Series::line("flat", vec![(1.0, 2.0), (1.0, 2.0)])];
        let svg = render("flat", "x", "y", &s);
        assert!(svg.contains("</svg>"));
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn tick_labels_trim_zeros() {
        assert_eq!(tick_label(0.0), "0");
        assert_eq!(tick_label(2.5), "2.5");
        assert_eq!(tick_label(3.0), "3");
        assert_eq!(tick_label(0.000012), "1.20e-5");
    }
}
