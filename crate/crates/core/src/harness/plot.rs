use std::path::Path;

use plotters::prelude::*;

use super::{AlgorithmRun, AveragedRow, ExperimentResults, HarnessError};

/// One named curve of a line plot.
pub struct PlotSeries {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const COLORS: [RGBColor; 4] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(148, 103, 189),
];

fn plot_error(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Plot(e.to_string())
}

/// Draws line series into a standalone SVG file.
pub fn plot_curves(path: &Path, title: &str, y_label: &str, series: &[PlotSeries]) -> Result<(), HarnessError> {
    let (mut x_max, mut y_min, mut y_max) = (1.0f64, f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for &(x, y) in &s.points {
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    }
    if !y_min.is_finite() {
        (y_min, y_max) = (0.0, 1.0);
    }
    let pad = ((y_max - y_min) * 0.05).max(1e-6);

    let root = SVGBackend::new(path, (900, 560)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_error)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(16)
        .x_label_area_size(44)
        .y_label_area_size(70)
        .build_cartesian_2d(0.0..x_max, (y_min - pad)..(y_max + pad))
        .map_err(plot_error)?;
    chart
        .configure_mesh()
        .x_desc("episode k")
        .y_desc(y_label)
        .draw()
        .map_err(plot_error)?;
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        chart
            .draw_series(LineSeries::new(s.points.iter().copied(), color.stroke_width(2)))
            .map_err(plot_error)?
            .label(s.label.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.85))
        .border_style(BLACK)
        .draw()
        .map_err(plot_error)?;
    root.present().map_err(plot_error)
}

fn series(run: &AlgorithmRun, label: String, f: impl Fn(&AveragedRow) -> f64) -> PlotSeries {
    PlotSeries {
        label,
        points: run.averaged.iter().map(|r| (r.k as f64, f(r))).collect(),
    }
}

pub(crate) fn write_figures(results: &ExperimentResults) -> Result<(), HarnessError> {
    let out = &results.config.output_dir;
    let per_algo = |f: fn(&AveragedRow) -> f64| -> Vec<PlotSeries> {
        results
            .runs
            .iter()
            .map(|r| series(r, r.algorithm.tag().to_string(), f))
            .collect()
    };

    plot_curves(
        &out.join("fig1_objective_regret.svg"),
        "Per-episode objective regret",
        "R_k",
        &per_algo(|r| r.mean_objective_regret),
    )?;
    plot_curves(
        &out.join("fig2_cumulative_regret.svg"),
        "Cumulative objective regret",
        "sum of R_k",
        &per_algo(|r| r.mean_cumulative_regret),
    )?;
    plot_curves(
        &out.join("fig3_constraint_regret.svg"),
        "Per-episode constraint regret",
        "C_k",
        &per_algo(|r| r.mean_constraint_regret),
    )?;

    let mut ablation = Vec::new();
    let er_runs = results
        .runs
        .iter()
        .filter(|r| r.algorithm == crate::learner::Algorithm::ErPsrl)
        .chain(results.ablation.iter());
    for run in er_runs {
        ablation.push(series(run, format!("er-psrl, {} proxy", run.proxy_mode.tag()), |r| {
            r.mean_cumulative_regret
        }));
    }
    plot_curves(
        &out.join("fig4_proxy_ablation.svg"),
        "Proxy-set ablation (ER-pSRL)",
        "sum of R_k",
        &ablation,
    )
}
