//! Static SVG comparison plot: per-seed bounds, their median and the
//! reference values against the noise level.

use std::path::Path;

use plotters::prelude::*;

use crate::harness::{ResultTable, Table};

/// Writes the plot of `which` to `path`. The design table uses a log axis.
pub fn plot_table(path: &Path, table: &ResultTable, which: Table) -> Result<(), String> {
    let points: Vec<(f64, f64)> = table
        .rows_of(which)
        .filter_map(|r| r.h.map(|h| (r.d_bar, h)))
        .collect();
    let medians: Vec<(f64, f64)> = table
        .summary_of(which)
        .filter_map(|s| s.median_h.map(|h| (s.d_bar, h)))
        .collect();
    let reference: Vec<(f64, f64)> = table
        .summary_of(which)
        .filter_map(|s| s.reference_h.map(|h| (s.d_bar, h)))
        .collect();
    let all = points.iter().chain(&reference);
    let x_max = all.clone().map(|p| p.0).fold(0.0, f64::max).max(1e-3) * 1.1;
    let y_max = all.clone().map(|p| p.1).fold(0.0, f64::max).max(1e-3) * 1.2;
    let y_min = all.map(|p| p.1).fold(f64::INFINITY, f64::min).min(y_max / 10.0) * 0.8;

    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| e.to_string())?;
    let caption = match which {
        Table::Analysis => "Certified bound of the benchmark gain",
        Table::Design => "Certified bound after gain iteration",
    };
    let err = |e: DrawingAreaErrorKind<_>| e.to_string();
    macro_rules! draw {
        ($chart:expr) => {{
            let mut chart = $chart;
            chart
                .configure_mesh()
                .x_desc("noise level")
                .y_desc("h")
                .draw()
                .map_err(err)?;
            chart
                .draw_series(points.iter().map(|&p| Circle::new(p, 3, BLACK.mix(0.35).filled())))
                .map_err(err)?
                .label("per seed")
                .legend(|(x, y)| Circle::new((x + 10, y), 3, BLACK.mix(0.35).filled()));
            chart
                .draw_series(LineSeries::new(medians.iter().copied(), BLUE.stroke_width(2)))
                .map_err(err)?
                .label("median")
                .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], BLUE.stroke_width(2)));
            chart
                .draw_series(reference.iter().map(|&p| Cross::new(p, 6, RED.stroke_width(2))))
                .map_err(err)?
                .label("reference")
                .legend(|(x, y)| Cross::new((x + 10, y), 5, RED.stroke_width(2)));
            chart
                .configure_series_labels()
                .background_style(WHITE.mix(0.8))
                .border_style(BLACK)
                .draw()
                .map_err(err)?;
        }};
    }
    let mut builder = ChartBuilder::on(&root);
    builder
        .caption(caption, ("sans-serif", 20))
        .margin(16)
        .x_label_area_size(40)
        .y_label_area_size(56);
    match which {
        Table::Analysis => draw!(builder
            .build_cartesian_2d(0.0..x_max, 0.0..y_max)
            .map_err(err)?),
        Table::Design => draw!(builder
            .build_cartesian_2d(0.0..x_max, (y_min..y_max).log_scale())
            .map_err(err)?),
    }
    root.present().map_err(|e| e.to_string())
}
