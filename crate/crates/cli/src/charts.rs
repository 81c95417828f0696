//! Hand-rolled SVG charts: axes, ticks, polylines, bars, and a legend.
//!
//! The evaluation report needs three small figures and nothing else, so the
//! renderer stays deliberately dumb: fixed canvas, linear scales, one text
//! style. Every file is standalone SVG with no external references.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 168.0;
const MARGIN_TOP: f64 = 48.0;
const MARGIN_BOTTOM: f64 = 64.0;
const TICKS: usize = 5;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// One named polyline of a line chart.
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

impl Series {
    pub fn solid(name: &str, points: Vec<(f64, f64)>) -> Self {
        Series {
            name: name.to_string(),
            points,
            dashed: false,
        }
    }

    pub fn dashed(name: &str, points: Vec<(f64, f64)>) -> Self {
        Series {
            name: name.to_string(),
            points,
            dashed: true,
        }
    }
}

/// Writes a line chart of the given series.
pub fn line_chart(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
) -> Result<()> {
    let points: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
    let (x_min, x_max) = padded_range(points.iter().map(|p| p.0));
    let (y_min, y_max) = padded_range(points.iter().map(|p| p.1));

    let mut svg = String::new();
    chart_header(&mut svg, title, x_label, y_label);
    axes_and_ticks(&mut svg, x_min, x_max, y_min, y_max);

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let dash = if s.dashed { " stroke-dasharray=\"6 4\"" } else { "" };
        let coords: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| {
                format!(
                    "{:.2},{:.2}",
                    to_px_x(x, x_min, x_max),
                    to_px_y(y, y_min, y_max)
                )
            })
            .collect();
        svg.push_str(&format!(
            "  <polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"{}/>\n",
            coords.join(" "),
            color,
            dash
        ));
        if !s.dashed {
            for &(x, y) in &s.points {
                svg.push_str(&format!(
                    "  <circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{}\"/>\n",
                    to_px_x(x, x_min, x_max),
                    to_px_y(y, y_min, y_max),
                    color
                ));
            }
        }
        legend_entry(&mut svg, i, &s.name, color);
    }

    svg.push_str("</svg>\n");
    write_file(path, &svg)
}

/// Writes a grouped bar chart: one cluster per category, one bar per group.
/// A `None` value leaves a gap in that cluster.
pub fn bar_chart(
    path: &Path,
    title: &str,
    y_label: &str,
    categories: &[String],
    groups: &[(String, Vec<Option<f64>>)],
) -> Result<()> {
    let values: Vec<f64> = groups
        .iter()
        .flat_map(|(_, vs)| vs.iter().flatten().copied())
        .collect();
    let top = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let y_max = if top.is_finite() && top > 0.0 { top * 1.05 } else { 1.0 };
    let y_min = 0.0;

    let mut svg = String::new();
    chart_header(&mut svg, title, "", y_label);
    axes_and_ticks_y(&mut svg, y_min, y_max);

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let cluster_w = plot_w / categories.len().max(1) as f64;
    let bar_w = cluster_w * 0.8 / groups.len().max(1) as f64;
    let base_y = HEIGHT - MARGIN_BOTTOM;

    for (ci, cat) in categories.iter().enumerate() {
        let cluster_x = MARGIN_LEFT + ci as f64 * cluster_w;
        for (gi, (_, vs)) in groups.iter().enumerate() {
            let Some(Some(v)) = vs.get(ci) else { continue };
            let h = (v - y_min) / (y_max - y_min) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM);
            let x = cluster_x + cluster_w * 0.1 + gi as f64 * bar_w;
            svg.push_str(&format!(
                "  <rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>\n",
                x,
                base_y - h,
                bar_w * 0.92,
                h,
                PALETTE[gi % PALETTE.len()]
            ));
        }
        svg.push_str(&format!(
            "  <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"13\">{}</text>\n",
            cluster_x + cluster_w / 2.0,
            base_y + 22.0,
            escape(cat)
        ));
    }

    for (gi, (name, _)) in groups.iter().enumerate() {
        legend_entry(&mut svg, gi, name, PALETTE[gi % PALETTE.len()]);
    }

    svg.push_str("</svg>\n");
    write_file(path, &svg)
}

fn chart_header(svg: &mut String, title: &str, x_label: &str, y_label: &str) {
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
         font-family=\"sans-serif\">\n"
    ));
    svg.push_str(&format!(
        "  <rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"{:.2}\" y=\"26\" text-anchor=\"middle\" font-size=\"17\">{}</text>\n",
        (MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0,
        escape(title)
    ));
    if !x_label.is_empty() {
        svg.push_str(&format!(
            "  <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
            (MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0,
            HEIGHT - 14.0,
            escape(x_label)
        ));
    }
    if !y_label.is_empty() {
        let cy = (MARGIN_TOP + HEIGHT - MARGIN_BOTTOM) / 2.0;
        svg.push_str(&format!(
            "  <text x=\"20\" y=\"{cy:.2}\" text-anchor=\"middle\" font-size=\"14\" \
             transform=\"rotate(-90 20 {cy:.2})\">{}</text>\n",
            escape(y_label)
        ));
    }
}

fn axes_and_ticks(svg: &mut String, x_min: f64, x_max: f64, y_min: f64, y_max: f64) {
    axes_and_ticks_y(svg, y_min, y_max);
    let base_y = HEIGHT - MARGIN_BOTTOM;
    for i in 0..TICKS {
        let v = x_min + (x_max - x_min) * i as f64 / (TICKS - 1) as f64;
        let x = to_px_x(v, x_min, x_max);
        svg.push_str(&format!(
            "  <line x1=\"{x:.2}\" y1=\"{base_y:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" \
             stroke=\"#333\"/>\n",
            base_y + 5.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"12\">{}</text>\n",
            base_y + 20.0,
            tick_label(v)
        ));
    }
}

fn axes_and_ticks_y(svg: &mut String, y_min: f64, y_max: f64) {
    let base_y = HEIGHT - MARGIN_BOTTOM;
    let right = WIDTH - MARGIN_RIGHT;
    for i in 0..TICKS {
        let v = y_min + (y_max - y_min) * i as f64 / (TICKS - 1) as f64;
        let y = to_px_y(v, y_min, y_max);
        svg.push_str(&format!(
            "  <line x1=\"{MARGIN_LEFT:.2}\" y1=\"{y:.2}\" x2=\"{right:.2}\" y2=\"{y:.2}\" \
             stroke=\"#ddd\"/>\n"
        ));
        svg.push_str(&format!(
            "  <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" font-size=\"12\">{}</text>\n",
            MARGIN_LEFT - 8.0,
            y + 4.0,
            tick_label(v)
        ));
    }
    svg.push_str(&format!(
        "  <line x1=\"{MARGIN_LEFT:.2}\" y1=\"{MARGIN_TOP:.2}\" x2=\"{MARGIN_LEFT:.2}\" \
         y2=\"{base_y:.2}\" stroke=\"#333\"/>\n"
    ));
    svg.push_str(&format!(
        "  <line x1=\"{MARGIN_LEFT:.2}\" y1=\"{base_y:.2}\" x2=\"{right:.2}\" \
         y2=\"{base_y:.2}\" stroke=\"#333\"/>\n"
    ));
}

fn legend_entry(svg: &mut String, index: usize, name: &str, color: &str) {
    let x = WIDTH - MARGIN_RIGHT + 16.0;
    let y = MARGIN_TOP + 10.0 + index as f64 * 24.0;
    svg.push_str(&format!(
        "  <rect x=\"{x:.2}\" y=\"{:.2}\" width=\"13\" height=\"13\" fill=\"{color}\"/>\n",
        y - 11.0
    ));
    svg.push_str(&format!(
        "  <text x=\"{:.2}\" y=\"{y:.2}\" font-size=\"13\">{}</text>\n",
        x + 19.0,
        escape(name)
    ));
}

fn to_px_x(v: f64, min: f64, max: f64) -> f64 {
    MARGIN_LEFT + (v - min) / (max - min) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
}

fn to_px_y(v: f64, min: f64, max: f64) -> f64 {
    HEIGHT - MARGIN_BOTTOM - (v - min) / (max - min) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
}

/// Data range padded by 4 percent so points never sit on the frame. A
/// degenerate range widens to one unit; no data at all maps to [0, 1].
fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for v in values {
        min = min.min(v);
        max = max.max(v);
    }
    if !min.is_finite() || !max.is_finite() {
        return (0.0, 1.0);
    }
    if min == max {
        return (min - 0.5, max + 0.5);
    }
    let pad = (max - min) * 0.04;
    (min - pad, max + pad)
}

fn tick_label(v: f64) -> String {
    let text = format!("{v:.3}");
    let text = text.trim_end_matches('0').trim_end_matches('.');
    if text.is_empty() || text == "-" {
        "0".to_string()
    } else {
        text.to_string()
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn write_file(path: &Path, svg: &str) -> Result<()> {
    let file =
        File::create(path).with_context(|| format!("creating chart {}", path.display()))?;
    let mut out = BufWriter::new(file);
    out.write_all(svg.as_bytes())?;
    out.flush()?;
    Ok(())
}
