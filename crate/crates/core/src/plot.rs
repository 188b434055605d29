//! SVG figures for sweep results.

use std::path::Path;

use plotters::prelude::*;

use crate::error::{Error, Result};
use crate::harness::{Arm, PaprComparison, SweepResult, SweepVariable};

fn plot_err<E: std::fmt::Display>(path: &Path) -> impl Fn(E) -> Error + '_ {
    move |e| Error::Plot(format!("{}: {e}", path.display()))
}

fn arm_color(arm: Arm) -> RGBColor {
    match arm {
        Arm::DamZf => RGBColor(31, 119, 180),
        Arm::DamMrt => RGBColor(44, 160, 44),
        Arm::DamMmse => RGBColor(214, 39, 40),
        Arm::OfdmWf => RGBColor(0, 0, 0),
    }
}

/// Mean spectral efficiency against the sweep variable, one line per arm.
pub fn se_plot(res: &SweepResult, path: &Path) -> Result<()> {
    let err = plot_err(path);
    let xs: Vec<f64> = res.points.iter().map(|p| p.value as f64).collect();
    let finite = res
        .points
        .iter()
        .flat_map(|p| p.arms.iter().map(|a| a.mean_se))
        .filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| {
        (l.min(v), h.max(v))
    });
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 1.0) };
    let pad = ((hi - lo) * 0.1).max(0.1);
    let x0 = xs.first().copied().unwrap_or(0.0);
    let x1 = xs.last().copied().unwrap_or(1.0).max(x0 + 1.0);

    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(&err)?;
    let x_label = match res.variable {
        SweepVariable::Antennas => "number of antennas M",
        SweepVariable::Paths => "number of paths L",
    };
    let mut chart = ChartBuilder::on(&root)
        .margin(16)
        .x_label_area_size(40)
        .y_label_area_size(56)
        .build_cartesian_2d(x0..x1, (lo - pad)..(hi + pad))
        .map_err(&err)?;
    chart
        .configure_mesh()
        .x_desc(x_label)
        .y_desc("spectral efficiency (bps/Hz)")
        .draw()
        .map_err(&err)?;
    for (k, &arm) in res.schemes.iter().enumerate() {
        let pts: Vec<(f64, f64)> = res
            .points
            .iter()
            .map(|p| (p.value as f64, p.arms[k].mean_se))
            .filter(|(_, y)| y.is_finite())
            .collect();
        let color = arm_color(arm);
        chart
            .draw_series(LineSeries::new(pts.clone(), color.stroke_width(2)))
            .map_err(&err)?
            .label(arm.label())
            .legend(move |(x, y)| {
                PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2))
            });
        chart
            .draw_series(pts.into_iter().map(|p| Circle::new(p, 3, color.filled())))
            .map_err(&err)?;
    }
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .background_style(WHITE.mix(0.8))
        .draw()
        .map_err(&err)?;
    root.present().map_err(&err)?;
    Ok(())
}

/// PAPR CCDF of the DAM and OFDM waveforms on a log scale.
pub fn papr_plot(papr: &PaprComparison, path: &Path) -> Result<()> {
    let err = plot_err(path);
    let floor = 1e-5;
    let t0 = papr.thresholds_db.first().copied().unwrap_or(0.0);
    let t1 = papr
        .thresholds_db
        .last()
        .copied()
        .unwrap_or(12.0)
        .max(t0 + 1.0);

    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(&err)?;
    let mut chart = ChartBuilder::on(&root)
        .margin(16)
        .x_label_area_size(40)
        .y_label_area_size(56)
        .build_cartesian_2d(t0..t1, (floor..1.0f64).log_scale())
        .map_err(&err)?;
    chart
        .configure_mesh()
        .x_desc("PAPR threshold (dB)")
        .y_desc("Pr(PAPR > threshold)")
        .draw()
        .map_err(&err)?;
    for (name, ccdf, color) in [("DAM", &papr.dam, RED), ("OFDM", &papr.ofdm, BLUE)] {
        let pts: Vec<(f64, f64)> = papr
            .thresholds_db
            .iter()
            .map(|&t| (t, ccdf.ccdf(t)))
            .filter(|&(_, p)| p >= floor)
            .collect();
        chart
            .draw_series(LineSeries::new(pts, color.stroke_width(2)))
            .map_err(&err)?
            .label(name)
            .legend(move |(x, y)| {
                PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2))
            });
    }
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .background_style(WHITE.mix(0.8))
        .draw()
        .map_err(&err)?;
    root.present().map_err(&err)?;
    Ok(())
}
