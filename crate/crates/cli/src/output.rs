//! Output files: CSV/JSON with the schema version and resolved config
//! embedded in every file, plus an optional minimal SVG line plot.
//!
//! Formatting is deterministic — floats use Rust's shortest round-trip
//! representation and maps serialize with sorted keys — so rerunning the
//! same config yields byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{Format, RunConfig};
use crate::CliError;

/// One CSV cell; `Missing` renders as an empty field.
#[derive(Debug, Clone)]
pub enum Cell {
    Float(f64),
    Int(u64),
    Text(String),
    Missing,
}

impl Cell {
    fn write_csv(&self, line: &mut String) {
        match self {
            Cell::Float(v) => line.push_str(&v.to_string()),
            Cell::Int(v) => line.push_str(&v.to_string()),
            Cell::Text(v) => line.push_str(v),
            Cell::Missing => {}
        }
    }
}

/// An extra JSON file written next to a CSV main file (the JSON format
/// folds the same data into the single document instead).
pub struct Sidecar {
    pub suffix: &'static str,
    pub schema: &'static str,
    pub payload: serde_json::Value,
}

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

pub struct Plot {
    pub title: String,
    pub x_label: &'static str,
    pub y_label: &'static str,
    pub series: Vec<Series>,
}

/// Everything one run produces, ready for the writers.
pub struct RunOutcome {
    pub schema: &'static str,
    pub summary: Vec<String>,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
    pub payload: serde_json::Value,
    pub sidecars: Vec<Sidecar>,
    pub plot: Option<Plot>,
}

fn config_comment_lines(configs: &[(&str, &RunConfig)]) -> String {
    let mut out = String::new();
    for (label, cfg) in configs {
        let json = serde_json::to_string(cfg).expect("config serializes to JSON");
        out.push_str(&format!("# {label}: {json}\n"));
    }
    out
}

fn render_csv(outcome: &RunOutcome, configs: &[(&str, &RunConfig)]) -> String {
    let mut text = format!("# schema: {}\n", outcome.schema);
    text.push_str(&config_comment_lines(configs));
    text.push_str(&outcome.columns.join(","));
    text.push('\n');
    for row in &outcome.rows {
        let mut line = String::new();
        for (i, cell) in row.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            cell.write_csv(&mut line);
        }
        text.push_str(&line);
        text.push('\n');
    }
    text
}

fn render_json(
    schema: &str,
    configs: &[(&str, &RunConfig)],
    summary: &[String],
    data: &serde_json::Value,
) -> String {
    let mut body = serde_json::Map::new();
    body.insert("schema".into(), schema.into());
    for (label, cfg) in configs {
        body.insert(
            (*label).into(),
            serde_json::to_value(cfg).expect("config serializes to JSON"),
        );
    }
    body.insert("summary".into(), summary.into());
    body.insert("data".into(), data.clone());
    let mut text = serde_json::to_string_pretty(&serde_json::Value::Object(body))
        .expect("report serializes to JSON");
    text.push('\n');
    text
}

fn sidecar_path(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    out.with_file_name(format!("{stem}{suffix}.json"))
}

/// Write the main data file (plus sidecars in CSV mode, plus the SVG when
/// asked and available) and return the paths written.
pub fn write_outputs(
    outcome: &RunOutcome,
    configs: &[(&str, &RunConfig)],
    format: Format,
    out: &Path,
    plot: bool,
) -> Result<Vec<PathBuf>, CliError> {
    let mut written = Vec::new();
    match format {
        Format::Csv => {
            fs::write(out, render_csv(outcome, configs))?;
            written.push(out.to_path_buf());
            for sidecar in &outcome.sidecars {
                let path = sidecar_path(out, sidecar.suffix);
                fs::write(
                    &path,
                    render_json(sidecar.schema, configs, &outcome.summary, &sidecar.payload),
                )?;
                written.push(path);
            }
        }
        Format::Json => {
            fs::write(
                out,
                render_json(outcome.schema, configs, &outcome.summary, &outcome.payload),
            )?;
            written.push(out.to_path_buf());
        }
    }
    if plot {
        if let Some(p) = &outcome.plot {
            let path = out.with_extension("svg");
            fs::write(&path, render_svg(p))?;
            written.push(path);
        }
    }
    Ok(written)
}

const PLOT_W: f64 = 720.0;
const PLOT_H: f64 = 440.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-3 {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

/// Self-contained minimal line plot: axes, three ticks per axis, a legend,
/// one polyline per series.
fn render_svg(plot: &Plot) -> String {
    let xs = plot.series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
    let ys = plot.series.iter().flat_map(|s| s.points.iter().map(|p| p.1));
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for x in xs {
        x_min = x_min.min(x);
        x_max = x_max.max(x);
    }
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for y in ys {
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    if x_min >= x_max {
        x_min -= 1.0;
        x_max += 1.0;
    }
    let pad = 0.05 * (y_max - y_min);
    if pad > 0.0 {
        y_min -= pad;
        y_max += pad;
    } else {
        y_min -= 1.0;
        y_max += 1.0;
    }
    let to_x = |x: f64| MARGIN_L + (x - x_min) / (x_max - x_min) * (PLOT_W - MARGIN_L - MARGIN_R);
    let to_y = |y: f64| PLOT_H - MARGIN_B - (y - y_min) / (y_max - y_min) * (PLOT_H - MARGIN_T - MARGIN_B);

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {PLOT_W} {PLOT_H}\" \
         font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    svg.push_str(&format!(
        "  <rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>\n",
        PLOT_W - MARGIN_L - MARGIN_R,
        PLOT_H - MARGIN_T - MARGIN_B
    ));
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        PLOT_W / 2.0,
        plot.title
    ));
    for frac in [0.0, 0.5, 1.0] {
        let xv = x_min + frac * (x_max - x_min);
        let yv = y_min + frac * (y_max - y_min);
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
            to_x(xv),
            PLOT_H - MARGIN_B + 16.0,
            tick_label(xv)
        ));
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>\n",
            MARGIN_L - 6.0,
            to_y(yv) + 4.0,
            tick_label(yv)
        ));
    }
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
        PLOT_W / 2.0,
        PLOT_H - 12.0,
        plot.x_label
    ));
    svg.push_str(&format!(
        "  <text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        PLOT_H / 2.0,
        PLOT_H / 2.0,
        plot.y_label
    ));
    for (i, series) in plot.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = series
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", to_x(x), to_y(y)))
            .collect();
        svg.push_str(&format!(
            "  <polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
            points.join(" ")
        ));
        let ly = MARGIN_T + 16.0 + 16.0 * i as f64;
        svg.push_str(&format!(
            "  <line x1=\"{0}\" y1=\"{ly}\" x2=\"{1}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            PLOT_W - MARGIN_R - 150.0,
            PLOT_W - MARGIN_R - 130.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\">{}</text>\n",
            PLOT_W - MARGIN_R - 124.0,
            ly + 4.0,
            series.name
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
