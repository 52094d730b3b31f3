//! SVG line plots rendered from CSV files that are already on disk, so plots
//! can never feed back into metrics.

use std::path::Path;

use plotters::prelude::*;

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq)]
pub struct PlotSpec {
    pub file_name: String,
    pub title: String,
    /// CSV file in the same directory.
    pub table: String,
    pub x: String,
    pub series: Vec<String>,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
}

impl PlotSpec {
    pub fn new(file_name: &str, title: &str, table: &str, x: &str, series: &[&str]) -> Self {
        PlotSpec {
            file_name: file_name.to_string(),
            title: title.to_string(),
            table: table.to_string(),
            x: x.to_string(),
            series: series.iter().map(|s| s.to_string()).collect(),
            x_label: x.to_string(),
            y_label: series.join(", "),
            log_y: false,
        }
    }

    pub fn labels(mut self, x: &str, y: &str) -> Self {
        self.x_label = x.to_string();
        self.y_label = y.to_string();
        self
    }

    pub fn log_y(mut self) -> Self {
        self.log_y = true;
        self
    }
}

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
];

/// Reads the named columns; blank cells and non-numeric text are skipped per point.
fn read_series(path: &Path, x: &str, series: &[String]) -> CliResult<Vec<(String, Vec<(f64, f64)>)>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::io(path, e))?;
    let headers = reader.headers().map_err(|e| CliError::io(path, e))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::io(path, format!("missing column `{name}`")))
    };
    let xi = col(x)?;
    let cols: Vec<usize> = series.iter().map(|s| col(s)).collect::<CliResult<_>>()?;
    let mut out: Vec<(String, Vec<(f64, f64)>)> = series.iter().map(|s| (s.clone(), Vec::new())).collect();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::io(path, e))?;
        let Some(xv) = record.get(xi).and_then(|s| s.parse::<f64>().ok()) else {
            continue;
        };
        for (slot, &c) in out.iter_mut().zip(&cols) {
            if let Some(yv) = record.get(c).and_then(|s| s.parse::<f64>().ok()) {
                if yv.is_finite() {
                    slot.1.push((xv, yv));
                }
            }
        }
    }
    Ok(out)
}

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
        let pad = 0.5 * lo.abs().max(1.0);
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

pub fn render(dir: &Path, spec: &PlotSpec) -> CliResult<()> {
    let mut data = read_series(&dir.join(&spec.table), &spec.x, &spec.series)?;
    if spec.log_y {
        for (_, pts) in &mut data {
            pts.retain(|p| p.1 > 0.0);
        }
    }
    let path = dir.join(&spec.file_name);
    let err = |e: &dyn std::fmt::Display| CliError::io(&path, e.to_string());
    let (x_lo, x_hi) = span(data.iter().flat_map(|(_, p)| p.iter().map(|q| q.0)));
    let root = SVGBackend::new(&path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| err(&e))?;
    let mut builder = ChartBuilder::on(&root);
    builder
        .caption(&spec.title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70);
    macro_rules! draw {
        ($chart:expr) => {{
            let mut chart = $chart;
            chart
                .configure_mesh()
                .x_desc(spec.x_label.as_str())
                .y_desc(spec.y_label.as_str())
                .draw()
                .map_err(|e| err(&e))?;
            for (i, (name, pts)) in data.iter().enumerate() {
                let color = PALETTE[i % PALETTE.len()];
                chart
                    .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))
                    .map_err(|e| err(&e))?
                    .label(name.as_str())
                    .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
            }
            if data.len() > 1 {
                chart
                    .configure_series_labels()
                    .background_style(WHITE.mix(0.8))
                    .border_style(BLACK)
                    .draw()
                    .map_err(|e| err(&e))?;
            }
        }};
    }
    if spec.log_y {
        let ys = data.iter().flat_map(|(_, p)| p.iter().map(|q| q.1));
        let (lo, hi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        let (lo, hi) = if lo.is_finite() { (lo / 2.0, hi * 2.0) } else { (1e-6, 1.0) };
        draw!(builder
            .build_cartesian_2d(x_lo..x_hi, (lo..hi).log_scale())
            .map_err(|e| err(&e))?);
    } else {
        let (y_lo, y_hi) = span(data.iter().flat_map(|(_, p)| p.iter().map(|q| q.1)));
        draw!(builder.build_cartesian_2d(x_lo..x_hi, y_lo..y_hi).map_err(|e| err(&e))?);
    }
    root.present().map_err(|e| err(&e))?;
    Ok(())
}
