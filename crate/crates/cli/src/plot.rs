//! Minimal SVG line plots of a run history.
//!
//! Three fixed panels mirror the figure rows used throughout: residual
//! norms with the residual gap and its running bound (top), running maxima
//! of the nine propagation column norms (middle), and the raw per-iteration
//! column norms (bottom). Vertical axes are log10; nonpositive values are
//! skipped. The CSV stays the authoritative record, the panels are derived
//! from it alone.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use krylov_gap_core::{CsvRow, PRODUCT_LABELS};

use crate::Result;

const WIDTH: f64 = 880.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 38.0;
const BOTTOM: f64 = 50.0;

/// One color per propagation product, reused across panels.
const PALETTE: [&str; 9] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#17becf",
];

struct Series {
    label: String,
    color: &'static str,
    /// SVG dash pattern; None draws solid.
    dash: Option<&'static str>,
    /// (iteration, log10 value), positive finite values only.
    points: Vec<(f64, f64)>,
}

fn series(
    rows: &[CsvRow],
    label: &str,
    color: &'static str,
    dash: Option<&'static str>,
    f: impl Fn(&CsvRow) -> f64,
) -> Series {
    let points = rows
        .iter()
        .filter_map(|r| {
            let v = f(r);
            (v.is_finite() && v > 0.0).then(|| (r.iter as f64, v.log10()))
        })
        .collect();
    Series {
        label: label.to_string(),
        color,
        dash,
        points,
    }
}

/// Writes `residuals.svg`, `colnorms_runmax.svg` and `colnorms.svg` next to
/// the history they were derived from.
pub fn write_plots(rows: &[CsvRow], dir: &Path) -> Result<()> {
    fs::write(dir.join("residuals.svg"), residual_panel(rows))?;
    fs::write(dir.join("colnorms_runmax.svg"), runmax_panel(rows))?;
    fs::write(dir.join("colnorms.svg"), colnorm_panel(rows))?;
    Ok(())
}

fn residual_panel(rows: &[CsvRow]) -> String {
    let s = vec![
        series(rows, "recursive ||r||", "#1f77b4", None, |r| r.rec_resid),
        series(rows, "true ||b-Ax||", "#d62728", None, |r| r.true_resid),
        series(rows, "gap ||Dr||", "#7f7f7f", Some("2,3"), |r| r.gap_r),
        series(rows, "bound f^r", "#2ca02c", Some("7,3"), |r| r.bound_fr),
    ];
    render("residual norms (log10)", &s, x_max(rows))
}

fn runmax_panel(rows: &[CsvRow]) -> String {
    let mut out = Vec::with_capacity(9);
    for (k, label) in PRODUCT_LABELS.iter().enumerate() {
        let mut running = 0.0f64;
        let points = rows
            .iter()
            .filter_map(|r| {
                running = running.max(r.col_norms[k]);
                (running.is_finite() && running > 0.0)
                    .then(|| (r.iter as f64, running.log10()))
            })
            .collect();
        out.push(Series {
            label: format!("max {label}"),
            color: PALETTE[k],
            dash: None,
            points,
        });
    }
    render("running max of column norms (log10)", &out, x_max(rows))
}

fn colnorm_panel(rows: &[CsvRow]) -> String {
    let s = PRODUCT_LABELS
        .iter()
        .enumerate()
        .map(|(k, label)| series(rows, label, PALETTE[k], None, |r| r.col_norms[k]))
        .collect::<Vec<_>>();
    render("column norms (log10)", &s, x_max(rows))
}

fn x_max(rows: &[CsvRow]) -> f64 {
    rows.iter().map(|r| r.iter as f64).fold(1.0, f64::max)
}

/// Step sizes of the form 1/2/5 x 10^k giving at most eight x ticks.
fn nice_step(span: f64) -> f64 {
    let raw = span / 8.0;
    let mag = 10f64.powf(raw.log10().floor());
    for mult in [1.0, 2.0, 5.0] {
        if mult * mag >= raw {
            return mult * mag;
        }
    }
    10.0 * mag
}

fn render(title: &str, all: &[Series], x_max: f64) -> String {
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{title}</text>"#,
        LEFT + (WIDTH - LEFT - RIGHT) / 2.0
    );

    let drawn: Vec<&Series> = all.iter().filter(|s| !s.points.is_empty()).collect();
    if drawn.is_empty() {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">no positive data</text>"#,
            WIDTH / 2.0,
            HEIGHT / 2.0
        );
        let _ = writeln!(svg, "</svg>");
        return svg;
    }

    let y_lo = drawn
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1))
        .fold(f64::INFINITY, f64::min)
        .floor();
    let mut y_hi = drawn
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1))
        .fold(f64::NEG_INFINITY, f64::max)
        .ceil();
    if y_hi <= y_lo {
        y_hi = y_lo + 1.0;
    }

    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + x / x_max * plot_w;
    let py = |y: f64| TOP + (y_hi - y) / (y_hi - y_lo) * plot_h;

    // Decade grid and y tick labels.
    let y_step = ((y_hi - y_lo) / 8.0).ceil().max(1.0);
    let mut tick = y_lo;
    while tick <= y_hi {
        let y = py(tick);
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##,
            LEFT + plot_w
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{}</text>"#,
            LEFT - 6.0,
            y + 4.0,
            tick as i64
        );
        tick += y_step;
    }

    // X ticks on a 1/2/5 grid.
    let x_step = nice_step(x_max);
    let mut x = 0.0;
    while x <= x_max + 1e-9 {
        let xx = px(x.min(x_max));
        let _ = writeln!(
            svg,
            r##"<line x1="{xx:.2}" y1="{TOP:.2}" x2="{xx:.2}" y2="{:.2}" stroke="#eeeeee"/>"##,
            TOP + plot_h
        );
        let _ = writeln!(
            svg,
            r#"<text x="{xx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + plot_h + 16.0,
            x as i64
        );
        x += x_step;
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">iteration</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        svg,
        r##"<rect x="{LEFT:.2}" y="{TOP:.2}" width="{plot_w:.2}" height="{plot_h:.2}" fill="none" stroke="#333333"/>"##
    );

    for s in &drawn {
        let mut pts = String::new();
        for (x, y) in &s.points {
            let _ = write!(pts, "{:.2},{:.2} ", px(*x), py(*y));
        }
        let dash = s
            .dash
            .map_or(String::new(), |d| format!(r#" stroke-dasharray="{d}""#));
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.3"{dash}/>"#,
            pts.trim_end(),
            s.color
        );
    }

    // Legend in the right margin.
    let lx = LEFT + plot_w + 12.0;
    for (i, s) in drawn.iter().enumerate() {
        let ly = TOP + 10.0 + 16.0 * i as f64;
        let dash = s
            .dash
            .map_or(String::new(), |d| format!(r#" stroke-dasharray="{d}""#));
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{}" stroke-width="1.3"{dash}/>"#,
            lx + 22.0,
            s.color
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 28.0,
            ly + 4.0,
            s.label
        );
    }

    let _ = writeln!(svg, "</svg>");
    svg
}
