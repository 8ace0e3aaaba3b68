use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::engine::TrainingTrace;
use crate::error::{Error, Result};
use crate::protocol::Base;
use crate::util::write_atomic;

/// Per-epoch mean and population std of `quantity` over the traces that
/// completed that epoch. Epochs no trace completed are omitted.
pub fn epoch_band(traces: &[TrainingTrace], quantity: Base) -> Vec<(usize, f64, f64)> {
    let last = traces.iter().filter_map(|t| t.records.last()).map(|r| r.epoch).max().unwrap_or(0);
    (1..=last)
        .filter_map(|epoch| {
            let vals: Vec<f64> = traces
                .iter()
                .filter_map(|t| t.record(epoch))
                .filter(|r| !r.diverged)
                .map(|r| r.value(quantity))
                .filter(|v| v.is_finite())
                .collect();
            if vals.is_empty() {
                return None;
            }
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            Some((epoch, mean, var.sqrt()))
        })
        .collect()
}

pub fn quantity_name(quantity: Base) -> &'static str {
    match quantity {
        Base::TrainLoss => "train_loss",
        Base::ValLoss => "val_loss",
        Base::TrainMetric => "train_f1",
        Base::ValMetric => "val_f1",
    }
}

/// File `emit_curves` writes for `stem` and `quantity`.
pub fn curve_path(out_dir: &Path, stem: &str, quantity: Base) -> PathBuf {
    out_dir.join(format!("{stem}_{}.svg", quantity_name(quantity)))
}

/// Renders one labelled line per family against epoch. A family of several
/// traces is drawn as its mean with a ±1 std band; a single trace is drawn
/// as-is. Writes `<stem>_<quantity>.svg` in `out_dir` and returns its path.
pub fn emit_curves(
    families: &[(String, Vec<TrainingTrace>)],
    quantity: Base,
    out_dir: &Path,
    stem: &str,
) -> Result<PathBuf> {
    let bands: Vec<(&str, bool, Vec<(usize, f64, f64)>)> = families
        .iter()
        .map(|(label, traces)| (label.as_str(), traces.len() > 1, epoch_band(traces, quantity)))
        .collect();
    let points = bands.iter().flat_map(|b| b.2.iter());
    let (mut x_max, mut y_min, mut y_max) = (1usize, f64::INFINITY, f64::NEG_INFINITY);
    for &(e, m, s) in points {
        x_max = x_max.max(e);
        y_min = y_min.min(m - s);
        y_max = y_max.max(m + s);
    }
    if !y_min.is_finite() {
        (y_min, y_max) = (0.0, 1.0);
    }
    let pad = ((y_max - y_min) * 0.05).max(1e-6);
    let name = quantity_name(quantity);

    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (800, 500)).into_drawing_area();
        let plot = |e: DrawingAreaErrorKind<std::io::Error>| Error::Io(std::io::Error::other(e.to_string()));
        root.fill(&WHITE).map_err(plot)?;
        let mut chart = ChartBuilder::on(&root)
            .caption(format!("{name} by epoch"), ("sans-serif", 20))
            .margin(12)
            .x_label_area_size(36)
            .y_label_area_size(56)
            .build_cartesian_2d(1f64..(x_max.max(2) as f64), (y_min - pad)..(y_max + pad))
            .map_err(plot)?;
        chart
            .configure_mesh()
            .x_desc("epoch")
            .y_desc(name)
            .draw()
            .map_err(plot)?;
        for (i, (label, banded, band)) in bands.iter().enumerate() {
            let colour = Palette99::pick(i).to_rgba();
            if *banded && band.len() > 1 {
                let upper = band.iter().map(|&(e, m, s)| (e as f64, m + s));
                let lower = band.iter().rev().map(|&(e, m, s)| (e as f64, m - s));
                chart
                    .draw_series(std::iter::once(Polygon::new(
                        upper.chain(lower).collect::<Vec<_>>(),
                        colour.mix(0.2).filled(),
                    )))
                    .map_err(plot)?;
            }
            chart
                .draw_series(LineSeries::new(band.iter().map(|&(e, m, _)| (e as f64, m)), colour.stroke_width(2)))
                .map_err(plot)?
                .label(*label)
                .legend(move |(x, y)| PathElement::new([(x, y), (x + 18, y)], colour.stroke_width(2)));
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(plot)?;
        root.present().map_err(plot)?;
    }
    std::fs::create_dir_all(out_dir)?;
    let path = curve_path(out_dir, stem, quantity);
    write_atomic(&path, svg.as_bytes())?;
    Ok(path)
}
