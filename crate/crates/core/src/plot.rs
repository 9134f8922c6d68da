//! Static SVG figures: loss curves, CMC curves, Rank-1 against duplication
//! rate.

use std::path::Path;

use plotters::prelude::*;

use crate::error::{Error, Result};
use crate::trainer::StepMetrics;

const SIZE: (u32, u32) = (720, 480);
const COLOURS: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
];

fn err<E: std::fmt::Display>(e: E) -> Error {
    Error::Plot(e.to_string())
}

/// A named polyline.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

fn bounds(series: &[Series]) -> Result<((f64, f64), (f64, f64))> {
    let pts = series.iter().flat_map(|s| s.points.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        return Err(Error::InvalidInput("nothing to plot".into()));
    }
    let pad = |a: f64, b: f64| if b > a { (a, b) } else { (a - 0.5, b + 0.5) };
    Ok((pad(x0, x1), pad(y0, y1)))
}

/// Line chart of `series` written as SVG to `path`.
pub fn line_chart(path: &Path, title: &str, x_label: &str, y_label: &str, series: &[Series]) -> Result<()> {
    let ((x0, x1), (y0, y1)) = bounds(series)?;
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(56)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(err)?;
    chart
        .configure_mesh()
        .x_desc(x_label)
        .y_desc(y_label)
        .draw()
        .map_err(err)?;
    for (i, s) in series.iter().enumerate() {
        let colour = COLOURS[i % COLOURS.len()];
        let pts: Vec<(f64, f64)> = s
            .points
            .iter()
            .copied()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .collect();
        chart
            .draw_series(LineSeries::new(pts.clone(), colour.stroke_width(2)))
            .map_err(err)?
            .label(s.name.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], colour.stroke_width(2)));
        if pts.len() <= 40 {
            chart
                .draw_series(pts.iter().map(|&p| Circle::new(p, 3, colour.filled())))
                .map_err(err)?;
        }
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(err)?;
    root.present().map_err(err)
}

/// Per-camera, association and joint loss against step.
pub fn loss_curves(path: &Path, metrics: &[StepMetrics]) -> Result<()> {
    let pick = |f: &dyn Fn(&StepMetrics) -> Option<f64>| -> Vec<(f64, f64)> {
        metrics
            .iter()
            .filter_map(|m| f(m).map(|v| (m.step as f64, v)))
            .collect()
    };
    let mut series = vec![
        Series {
            name: "pctd".into(),
            points: pick(&|m| Some(m.pctd)),
        },
        Series {
            name: "joint".into(),
            points: pick(&|m| Some(m.joint)),
        },
    ];
    let ccta = pick(&|m| m.ccta);
    if !ccta.is_empty() {
        series.push(Series {
            name: "ccta".into(),
            points: ccta,
        });
    }
    line_chart(path, "Training loss", "step", "loss", &series)
}

/// CMC curves, accuracies given as fractions and drawn in percent.
pub fn cmc_curves(path: &Path, curves: &[(String, Vec<f64>)]) -> Result<()> {
    let series: Vec<Series> = curves
        .iter()
        .map(|(name, c)| Series {
            name: name.clone(),
            points: c
                .iter()
                .enumerate()
                .map(|(k, v)| ((k + 1) as f64, 100.0 * v))
                .collect(),
        })
        .collect();
    line_chart(path, "CMC", "rank", "matching rate (%)", &series)
}

/// Mean Rank-1 (percent) per duplication rate.
pub fn rank1_vs_rate(path: &Path, points: &[(f64, f64)]) -> Result<()> {
    let series = [Series {
        name: "rank-1".into(),
        points: points.to_vec(),
    }];
    line_chart(path, "Rank-1 vs duplication rate", "duplication rate", "rank-1 (%)", &series)
}
