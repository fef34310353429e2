use std::path::Path;

use plotters::prelude::*;

use crate::pipeline::IterationLog;
use crate::{Error, Result};

use super::metrics::MetricsReport;

fn plot_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Format(format!("plot: {e}"))
}

fn series(logs: &[IterationLog], f: impl Fn(&IterationLog) -> f64) -> Vec<(f64, f64)> {
    logs.iter().enumerate().map(|(i, l)| (i as f64, f(l))).filter(|(_, v)| *v > 0.0 && v.is_finite()).collect()
}

/// Loss curves on a log scale, one line per term.
pub fn plot_losses(logs: &[IterationLog], path: &Path) -> Result<()> {
    if logs.is_empty() {
        return Err(Error::Invalid("no log rows to plot".into()));
    }
    let curves: [(&str, Box<dyn Fn(&IterationLog) -> f64>); 7] = [
        ("total", Box::new(|l| l.total)),
        ("recon", Box::new(|l| l.recon)),
        ("clothing", Box::new(|l| l.clothing)),
        ("silhouette", Box::new(|l| l.silhouette)),
        ("skin", Box::new(|l| l.skin + l.skininside)),
        ("inside", Box::new(|l| l.inside + l.bodymask)),
        ("regularizers", Box::new(|l| l.edge + l.offset)),
    ];
    let data: Vec<(&str, Vec<(f64, f64)>)> = curves.iter().map(|(n, f)| (*n, series(logs, f))).collect();
    let all = data.iter().flat_map(|(_, s)| s.iter().map(|p| p.1));
    let (lo, hi) = all.fold((f64::MAX, f64::MIN), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let (lo, hi) = if lo <= hi { (lo * 0.8, hi * 1.25) } else { (1e-6, 1.0) };

    let root = SVGBackend::new(path, (900, 540)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("training losses", ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(60)
        .build_cartesian_2d(0f64..logs.len() as f64, (lo..hi).log_scale())
        .map_err(plot_err)?;
    chart.configure_mesh().x_desc("iteration").y_desc("loss").draw().map_err(plot_err)?;
    for (i, (name, points)) in data.into_iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(LineSeries::new(points, color.stroke_width(if i == 0 { 2 } else { 1 })))
            .map_err(plot_err)?
            .label(name)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
    }
    chart.configure_series_labels().border_style(BLACK).background_style(WHITE.mix(0.8)).draw().map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}

/// Per-frame PSNR, train frames and held-out frames in different colors.
pub fn plot_metrics(report: &MetricsReport, path: &Path) -> Result<()> {
    let finite: Vec<f64> = report.frames.iter().map(|m| m.psnr).filter(|p| p.is_finite()).collect();
    if finite.is_empty() {
        return Err(Error::Invalid("no finite PSNR values to plot".into()));
    }
    let lo = finite.iter().cloned().fold(f64::MAX, f64::min) - 1.0;
    let hi = finite.iter().cloned().fold(f64::MIN, f64::max) + 1.0;
    let max_frame = report.frames.iter().map(|m| m.frame).max().unwrap_or(0) as f64 + 1.0;

    let root = SVGBackend::new(path, (900, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("per-frame PSNR (dB)", ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(50)
        .build_cartesian_2d(-0.5f64..max_frame, lo..hi)
        .map_err(plot_err)?;
    chart.configure_mesh().x_desc("frame").y_desc("PSNR").draw().map_err(plot_err)?;
    for (split, color) in [("train", BLUE), ("test", RED)] {
        let points: Vec<(f64, f64)> = report.frames.iter().filter(|m| m.split == split && m.psnr.is_finite()).map(|m| (m.frame as f64, m.psnr)).collect();
        chart
            .draw_series(points.into_iter().map(|p| Circle::new(p, 4, color.filled())))
            .map_err(plot_err)?
            .label(split)
            .legend(move |(x, y)| Circle::new((x + 8, y), 4, color.filled()));
    }
    chart.configure_series_labels().border_style(BLACK).background_style(WHITE.mix(0.8)).draw().map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}
