//! BER-vs-level curves. The bitmap carries no text, so the axis scales and
//! the provenance are recorded in a JSON sidecar.

use std::path::Path;

use plotters::prelude::*;
use serde::Serialize;

use crate::distortion::{DistortionKind, SWEEP_LEVELS};
use crate::{Error, Result};

const SIZE: (u32, u32) = (640, 400);
const Y_STEP: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotSidecar {
    pub file: String,
    pub kind: DistortionKind,
    pub x_range: (u8, u8),
    pub y_range: (f64, f64),
    /// Spacing of the horizontal gridlines; vertical ones mark each level.
    pub y_grid_step: f64,
    /// Red: BER per level. Blue: clean BER.
    pub series: [&'static str; 2],
    pub config_fingerprint: String,
}

fn plot_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io {
        path: path.to_owned(),
        source: std::io::Error::other(e.to_string()),
    }
}

pub fn ber_curve(
    path: &Path,
    kind: DistortionKind,
    points: &[(u8, f64)],
    clean_ber: f64,
    fingerprint: &str,
) -> Result<PlotSidecar> {
    let peak = points.iter().map(|p| p.1).fold(clean_ber, f64::max);
    let y_max = ((peak / Y_STEP).ceil() * Y_STEP).clamp(0.5, 1.0);
    let x_max = f64::from(SWEEP_LEVELS - 1);
    let err = |e| plot_err(path, e);

    let root = BitMapBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    let mut chart = ChartBuilder::on(&root)
        .margin(24)
        .build_cartesian_2d(0.0..x_max, 0.0..y_max)
        .map_err(err)?;

    let grid = RGBColor(220, 220, 220);
    for l in 0..SWEEP_LEVELS {
        let x = f64::from(l);
        chart.draw_series(LineSeries::new([(x, 0.0), (x, y_max)], grid)).map_err(err)?;
    }
    let mut y = Y_STEP;
    while y <= y_max + 1e-9 {
        chart.draw_series(LineSeries::new([(0.0, y), (x_max, y)], grid)).map_err(err)?;
        y += Y_STEP;
    }
    chart
        .draw_series(LineSeries::new([(0.0, y_max), (0.0, 0.0), (x_max, 0.0)], BLACK.stroke_width(2)))
        .map_err(err)?;
    chart
        .draw_series(LineSeries::new([(0.0, clean_ber), (x_max, clean_ber)], BLUE.stroke_width(2)))
        .map_err(err)?;
    let xy: Vec<(f64, f64)> = points.iter().map(|&(l, b)| (f64::from(l), b)).collect();
    chart
        .draw_series(LineSeries::new(xy.iter().copied(), RED.stroke_width(2)))
        .map_err(err)?;
    chart
        .draw_series(xy.iter().map(|&p| Circle::new(p, 4, RED.filled())))
        .map_err(err)?;
    root.present().map_err(err)?;

    Ok(PlotSidecar {
        file: path
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_default(),
        kind,
        x_range: (0, SWEEP_LEVELS - 1),
        y_range: (0.0, y_max),
        y_grid_step: Y_STEP,
        series: ["ber", "clean_ber"],
        config_fingerprint: fingerprint.to_owned(),
    })
}
