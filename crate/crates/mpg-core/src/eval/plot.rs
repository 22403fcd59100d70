//! Standalone SVG plots: learning curves (polylines) and metric bars.
//! Pure functions of the input data; no plotting dependencies.

use crate::error::{Error, Result};
use crate::metrics::MetricRow;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct CurveSeries {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const SERIES_COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 52.0;

fn axis_frame(svg: &mut String, title: &str, x_label: &str, y_label: &str) {
    write!(
        svg,
        "<rect x='0' y='0' width='{W}' height='{H}' fill='white'/>\
         <text x='{}' y='20' text-anchor='middle' font-size='14' font-family='sans-serif'>{title}</text>\
         <line x1='{MARGIN}' y1='{}' x2='{}' y2='{}' stroke='black'/>\
         <line x1='{MARGIN}' y1='{MARGIN}' x2='{MARGIN}' y2='{}' stroke='black'/>\
         <text x='{}' y='{}' text-anchor='middle' font-size='11' font-family='sans-serif'>{x_label}</text>\
         <text x='14' y='{}' text-anchor='middle' font-size='11' font-family='sans-serif' transform='rotate(-90 14 {})'>{y_label}</text>",
        W / 2.0,
        H - MARGIN,
        W - MARGIN / 2.0,
        H - MARGIN,
        H - MARGIN,
        W / 2.0,
        H - 12.0,
        H / 2.0,
        H / 2.0,
    )
    .unwrap();
}

/// Renders one polyline per series with a shared axis range.
pub fn plot_curves(series: &[CurveSeries], title: &str, path: &Path) -> Result<()> {
    if series.is_empty() || series.iter().all(|s| s.points.is_empty()) {
        return Err(Error::Parse {
            line: 0,
            msg: "no data to plot".into(),
        });
    }
    let mut x_max = f64::MIN;
    let mut y_max = f64::MIN;
    let mut x_min = f64::MAX;
    let mut y_min: f64 = 0.0;
    for s in series {
        for &(x, y) in &s.points {
            x_max = x_max.max(x);
            x_min = x_min.min(x);
            y_max = y_max.max(y);
            y_min = y_min.min(y);
        }
    }
    if (x_max - x_min).abs() < 1e-12 {
        x_max = x_min + 1.0;
    }
    y_max = y_max.max(y_min + 1e-9).max(1.0);
    let sx = |x: f64| MARGIN + (x - x_min) / (x_max - x_min) * (W - 1.5 * MARGIN);
    let sy = |y: f64| (H - MARGIN) - (y - y_min) / (y_max - y_min) * (H - 1.5 * MARGIN);

    let mut svg = String::new();
    write!(
        svg,
        "<svg xmlns='http://www.w3.org/2000/svg' width='{W}' height='{H}' viewBox='0 0 {W} {H}'>"
    )
    .unwrap();
    axis_frame(&mut svg, title, "training step", "success rate");
    // y ticks at 0, 0.5·max, max
    for frac in [0.0, 0.5, 1.0] {
        let yv = y_min + frac * (y_max - y_min);
        write!(
            svg,
            "<text x='{}' y='{}' text-anchor='end' font-size='10' font-family='sans-serif'>{:.2}</text>",
            MARGIN - 6.0,
            sy(yv) + 3.0,
            yv
        )
        .unwrap();
    }
    for (i, s) in series.iter().enumerate() {
        let color = SERIES_COLORS[i % SERIES_COLORS.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        write!(
            svg,
            "<polyline fill='none' stroke='{color}' stroke-width='1.5' points='{}'/>",
            pts.join(" ")
        )
        .unwrap();
        write!(
            svg,
            "<text x='{}' y='{}' font-size='11' font-family='sans-serif' fill='{color}'>{}</text>",
            W - MARGIN - 120.0,
            MARGIN + 16.0 * i as f64,
            s.label
        )
        .unwrap();
    }
    svg.push_str("</svg>");
    std::fs::write(path, svg)?;
    Ok(())
}

/// Renders labeled bars (e.g. task success rate per policy).
pub fn plot_bars(bars: &[(String, f64)], title: &str, path: &Path) -> Result<()> {
    if bars.is_empty() {
        return Err(Error::Parse {
            line: 0,
            msg: "no data to plot".into(),
        });
    }
    let y_max = bars.iter().map(|(_, v)| *v).fold(0.0f64, f64::max).max(1e-9);
    let n = bars.len() as f64;
    let slot = (W - 2.0 * MARGIN) / n;
    let bar_w = slot * 0.6;
    let sy = |y: f64| (H - MARGIN) - y / y_max * (H - 1.5 * MARGIN);

    let mut svg = String::new();
    write!(
        svg,
        "<svg xmlns='http://www.w3.org/2000/svg' width='{W}' height='{H}' viewBox='0 0 {W} {H}'>"
    )
    .unwrap();
    axis_frame(&mut svg, title, "", "value");
    for (i, (label, value)) in bars.iter().enumerate() {
        let x = MARGIN + slot * i as f64 + (slot - bar_w) / 2.0;
        let color = SERIES_COLORS[i % SERIES_COLORS.len()];
        write!(
            svg,
            "<rect x='{x:.2}' y='{:.2}' width='{bar_w:.2}' height='{:.2}' fill='{color}'/>\
             <text x='{:.2}' y='{}' text-anchor='middle' font-size='10' font-family='sans-serif'>{label}</text>\
             <text x='{:.2}' y='{:.2}' text-anchor='middle' font-size='10' font-family='sans-serif'>{value:.3}</text>",
            sy(*value),
            (H - MARGIN) - sy(*value),
            x + bar_w / 2.0,
            H - MARGIN + 14.0,
            x + bar_w / 2.0,
            sy(*value) - 4.0,
        )
        .unwrap();
    }
    svg.push_str("</svg>");
    std::fs::write(path, svg)?;
    Ok(())
}

/// Extracts the windowed success-rate curve from training metric rows,
/// skipping gap markers.
pub fn success_curve(rows: &[MetricRow]) -> Vec<(f64, f64)> {
    rows.iter()
        .filter(|r| r.is_window_summary() && r.success >= 0.0)
        .map(|r| (r.step as f64, r.success))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_series_produces_one_polyline() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curve.svg");
        let series = vec![CurveSeries {
            label: "policy".into(),
            points: vec![(0.0, 0.1), (200.0, 0.5), (400.0, 0.8)],
        }];
        plot_curves(&series, "learning curve", &path).unwrap();
        let svg = std::fs::read_to_string(&path).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.contains("policy"));
    }

    #[test]
    fn two_series_are_labeled() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("two.svg");
        let series = vec![
            CurveSeries {
                label: "a".into(),
                points: vec![(0.0, 0.2), (100.0, 0.4)],
            },
            CurveSeries {
                label: "b".into(),
                points: vec![(0.0, 0.1), (100.0, 0.9)],
            },
        ];
        plot_curves(&series, "t", &path).unwrap();
        let svg = std::fs::read_to_string(&path).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
    }

    #[test]
    fn empty_input_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(plot_curves(&[], "t", &dir.path().join("x.svg")).is_err());
        assert!(plot_bars(&[], "t", &dir.path().join("y.svg")).is_err());
    }
}
