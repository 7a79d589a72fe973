//! Line charts of a sweep summary as standalone SVG.

use std::fmt::Write;

use crate::sweep::{summarize, Estimator, Row, SweepError};

#[derive(Debug, Clone, PartialEq)]
pub struct Axes {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
}

impl Axes {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>) -> Self {
        Self { title: title.into(), x_label: x_label.into(), y_label: "mean L1 error (worst distance)".into() }
    }
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 140.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const Y_TICKS: usize = 5;

fn colour(e: Estimator) -> &'static str {
    match e {
        Estimator::Robust => "#1f77b4",
        Estimator::Oracle => "#2ca02c",
        Estimator::Naive => "#d62728",
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders one polyline per estimator over the worst-of-grid summary of
/// `rows`. The y axis spans `[0, 1.1 * max error]`.
pub fn emit_plot(rows: &[Row], axes: &Axes) -> Result<String, SweepError> {
    let points = summarize(rows)?;
    let estimators: Vec<Estimator> = [Estimator::Robust, Estimator::Oracle, Estimator::Naive]
        .into_iter()
        .filter(|&e| rows.iter().any(|r| r.estimator == e))
        .collect();
    let max_err = points
        .iter()
        .flat_map(|p| estimators.iter().map(|&e| p.error(e)))
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max);
    let y_max = if max_err > 0.0 { 1.1 * max_err } else { 1.0 };
    let (x_min, x_max) = (points[0].param, points[points.len() - 1].param);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| {
        if x_max > x_min {
            LEFT + (x - x_min) / (x_max - x_min) * plot_w
        } else {
            LEFT + plot_w / 2.0
        }
    };
    let sy = |y: f64| TOP + plot_h - y / y_max * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(&axes.title)
    );
    let _ = writeln!(
        s,
        r#"<g stroke="black" stroke-width="1"><line x1="{LEFT}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/><line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.2}"/></g>"#,
        TOP + plot_h,
        LEFT + plot_w,
        TOP + plot_h,
        TOP + plot_h
    );
    for i in 0..=Y_TICKS {
        let v = y_max * i as f64 / Y_TICKS as f64;
        let y = sy(v);
        let _ = writeln!(
            s,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{v:.4}</text>"##,
            LEFT,
            LEFT + plot_w,
            LEFT - 6.0,
            y + 4.0
        );
    }
    for p in &points {
        let x = sx(p.param);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + plot_h,
            TOP + plot_h + 5.0,
            TOP + plot_h + 20.0,
            p.param
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 15.0,
        escape(&axes.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        escape(&axes.y_label)
    );
    for (i, &e) in estimators.iter().enumerate() {
        let coords: Vec<String> = points
            .iter()
            .filter(|p| p.error(e).is_finite())
            .map(|p| format!("{:.2},{:.2}", sx(p.param), sy(p.error(e))))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="{}" fill="none" stroke="{}" stroke-width="2" points="{}"/>"#,
            e.name(),
            colour(e),
            coords.join(" ")
        );
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = LEFT + plot_w + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 25.0,
            colour(e),
            lx + 32.0,
            ly + 4.0,
            e.name()
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows() -> Vec<Row> {
        let mut out = Vec::new();
        for (i, param) in [250.0, 500.0, 1000.0, 2000.0].into_iter().enumerate() {
            for e in Estimator::ALL {
                let err = match e {
                    Estimator::Naive => 0.5,
                    Estimator::Oracle => 0.01,
                    Estimator::Robust => 0.1 / (i + 1) as f64,
                };
                out.push(Row {
                    sweep: "batch_size".into(),
                    param,
                    trial: 0,
                    adv_distance: 0.4,
                    estimator: e,
                    l1_error: err,
                    runtime_ms: None,
                    batches_deleted: None,
                    good_deleted: None,
                    iterations: None,
                });
            }
        }
        out
    }

    #[test]
    fn three_lines_four_vertices() {
        let svg = emit_plot(&rows(), &Axes::new("t", "n")).unwrap();
        let lines: Vec<&str> = svg.lines().filter(|l| l.starts_with("<polyline")).collect();
        assert_eq!(lines.len(), 3);
        for l in lines {
            let pts = l.split("points=\"").nth(1).unwrap().trim_end_matches("\"/>");
            assert_eq!(pts.split(' ').count(), 4);
        }
    }

    #[test]
    fn y_axis_tops_out_at_110_percent() {
        let svg = emit_plot(&rows(), &Axes::new("t", "n")).unwrap();
        // max error is the naive 0.5
        assert!(svg.contains(">0.5500</text>"));
        assert!(svg.contains(">0.0000</text>"));
        // the naive line sits at y = 0.5 / 0.55 of the plot height
        let y = TOP + (HEIGHT - TOP - BOTTOM) * (1.0 - 0.5 / 0.55);
        assert!(svg.contains(&format!("{LEFT:.2},{y:.2}")));
    }

    #[test]
    fn deterministic_and_rejects_empty() {
        let a = emit_plot(&rows(), &Axes::new("t <1>", "n")).unwrap();
        assert_eq!(a, emit_plot(&rows(), &Axes::new("t <1>", "n")).unwrap());
        assert!(a.contains("t &lt;1&gt;"));
        assert!(emit_plot(&[], &Axes::new("t", "n")).is_err());
    }
}
