//! Static SVG figures of a recorded run.

use std::path::{Path, PathBuf};

use plotters::coord::Shift;
use plotters::prelude::*;

use crate::error::{Error, Result};
use crate::sim::SimTrace;

pub const TRAJECTORY_FILE: &str = "trajectories.svg";
pub const RADIUS_FILE: &str = "radius.svg";
pub const ERROR_FILE: &str = "tracking_error.svg";
pub const SOCIAL_FILE: &str = "social.svg";

const PANEL: (u32, u32) = (480, 480);
const CURVES: (u32, u32) = (900, 420);
const CIRCLE_POINTS: usize = 72;

#[derive(Debug, Clone, Default)]
pub struct PlotOptions {
    /// Snapshot times for the trajectory panels; empty means four evenly
    /// spaced stamps ending at the last row.
    pub stamps: Vec<f64>,
    /// Per-agent annotation, e.g. the social deviation metric.
    pub annotations: Vec<(String, f64)>,
}

/// Four evenly spaced stamps `T/4, T/2, 3T/4, T`.
pub fn default_stamps(trace: &SimTrace) -> Vec<f64> {
    let end = trace.times.last().copied().unwrap_or(0.0);
    (1..=4).map(|i| end * i as f64 / 4.0).collect()
}

/// Coordinate pairs drawn for a workspace of dimension `n`.
pub fn projections(n: usize) -> Vec<(usize, usize)> {
    if n <= 2 {
        return vec![(0, 1.min(n.saturating_sub(1)))];
    }
    let mut pairs = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            pairs.push((a, b));
        }
    }
    pairs
}

fn row_at(trace: &SimTrace, t: f64) -> usize {
    let last = trace.rows().saturating_sub(1);
    trace
        .times
        .iter()
        .position(|&s| s >= t - 1e-9)
        .unwrap_or(last)
        .min(last)
}

fn color(k: usize) -> RGBColor {
    let c = Palette99::pick(k).to_rgba();
    RGBColor(c.0, c.1, c.2)
}

fn plot_err<E: std::fmt::Debug>(e: E) -> Error {
    Error::Plot(format!("{e:?}"))
}

fn circle(cx: f64, cy: f64, r: f64) -> Vec<(f64, f64)> {
    (0..=CIRCLE_POINTS)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / CIRCLE_POINTS as f64;
            (cx + r * a.cos(), cy + r * a.sin())
        })
        .collect()
}

/// Writes every figure into `dir` and returns the written paths.
pub fn plot_run(trace: &SimTrace, dir: &Path, opts: &PlotOptions) -> Result<Vec<PathBuf>> {
    if trace.rows() == 0 {
        return Err(Error::Plot("trace has no rows".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let stamps = if opts.stamps.is_empty() {
        default_stamps(trace)
    } else {
        opts.stamps.clone()
    };
    let out = vec![
        dir.join(TRAJECTORY_FILE),
        dir.join(RADIUS_FILE),
        dir.join(ERROR_FILE),
        dir.join(SOCIAL_FILE),
    ];
    plot_trajectories(trace, &out[0], &stamps, &opts.annotations)?;
    plot_agent_curves(trace, &out[1], "tube radius ρ(t)", |k, r| trace.rho(k, r))?;
    plot_agent_curves(trace, &out[2], "normalized error e1(t)", |k, r| trace.agents[k].e1[r])?;
    plot_social(trace, &out[3])?;
    Ok(out)
}

fn bounds(trace: &SimTrace, a: usize, b: usize) -> ((f64, f64), (f64, f64)) {
    let n = trace.dimension;
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    let mut grow = |p: [f64; 2], r: f64| {
        for i in 0..2 {
            if p[i].is_finite() && r.is_finite() {
                lo[i] = lo[i].min(p[i] - r);
                hi[i] = hi[i].max(p[i] + r);
            }
        }
    };
    for row in 0..trace.rows() {
        for k in 0..trace.agents.len() {
            let s = trace.sigma(k, row);
            grow([s[a], s[b]], trace.rho(k, row));
            let y = trace.output(k, row);
            grow([y[a], y[b]], 0.0);
        }
        for (j, o) in trace.obstacles.iter().enumerate() {
            let c = &o.center[row * n..row * n + n];
            grow([c[a], c[b]], trace.obstacle_radius(j, row));
        }
    }
    // equal aspect so circles stay round
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-6) * 1.05;
    let mid = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
    (
        (mid[0] - span / 2.0, mid[0] + span / 2.0),
        (mid[1] - span / 2.0, mid[1] + span / 2.0),
    )
}

fn plot_trajectories(trace: &SimTrace, path: &Path, stamps: &[f64], notes: &[(String, f64)]) -> Result<()> {
    let pairs = projections(trace.dimension);
    let size = (PANEL.0 * stamps.len().max(1) as u32, PANEL.1 * pairs.len() as u32);
    let root = SVGBackend::new(path, size).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let panels = root.split_evenly((pairs.len(), stamps.len().max(1)));
    for (p, &(a, b)) in pairs.iter().enumerate() {
        let (xr, yr) = bounds(trace, a, b);
        for (s, &t) in stamps.iter().enumerate() {
            let area = &panels[p * stamps.len() + s];
            draw_panel(trace, area, (a, b), (xr, yr), t, notes, p == 0 && s == 0)?;
        }
    }
    root.present().map_err(plot_err)
}

fn draw_panel(
    trace: &SimTrace,
    area: &DrawingArea<SVGBackend, Shift>,
    (a, b): (usize, usize),
    (xr, yr): ((f64, f64), (f64, f64)),
    t: f64,
    notes: &[(String, f64)],
    legend: bool,
) -> Result<()> {
    let n = trace.dimension;
    let row = row_at(trace, t);
    let caption = if n > 2 {
        format!("t = {:.2} s  (x{a}, x{b})", trace.times[row])
    } else {
        format!("t = {:.2} s", trace.times[row])
    };
    let mut chart = ChartBuilder::on(area)
        .caption(caption, ("sans-serif", 16))
        .margin(8)
        .x_label_area_size(28)
        .y_label_area_size(36)
        .build_cartesian_2d(xr.0..xr.1, yr.0..yr.1)
        .map_err(plot_err)?;
    chart.configure_mesh().light_line_style(WHITE).draw().map_err(plot_err)?;

    for (j, o) in trace.obstacles.iter().enumerate() {
        let c = &o.center[row * n..row * n + n];
        let ring = circle(c[a], c[b], trace.obstacle_radius(j, row));
        chart
            .draw_series(std::iter::once(Polygon::new(ring, BLACK.mix(0.35).filled())))
            .map_err(plot_err)?;
    }
    for k in 0..trace.agents.len() {
        let col = color(k);
        let path: Vec<(f64, f64)> = (0..=row)
            .map(|r| {
                let s = trace.sigma(k, r);
                (s[a], s[b])
            })
            .collect();
        chart
            .draw_series(LineSeries::new(path, col.mix(0.5).stroke_width(1)))
            .map_err(plot_err)?;
        let out: Vec<(f64, f64)> = (0..=row)
            .map(|r| {
                let y = trace.output(k, r);
                (y[a], y[b])
            })
            .collect();
        let label = match notes.iter().find(|(id, _)| *id == trace.agents[k].id) {
            Some((id, v)) => format!("{id} ({v:.3})"),
            None => trace.agents[k].id.clone(),
        };
        chart
            .draw_series(LineSeries::new(out, col.stroke_width(2)))
            .map_err(plot_err)?
            .label(label)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], col.stroke_width(2)));
        let s = trace.sigma(k, row);
        chart
            .draw_series(LineSeries::new(circle(s[a], s[b], trace.rho(k, row)), col.stroke_width(1)))
            .map_err(plot_err)?;
    }
    if !legend {
        return Ok(());
    }
    chart
        .configure_series_labels()
        .position(SeriesLabelPosition::UpperLeft)
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .label_font(("sans-serif", 11))
        .draw()
        .map_err(plot_err)
}

fn value_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-6);
    (lo - pad, hi + pad)
}

fn plot_agent_curves<F>(trace: &SimTrace, path: &Path, title: &str, value: F) -> Result<()>
where
    F: Fn(usize, usize) -> f64,
{
    let rows = trace.rows();
    let na = trace.agents.len();
    let yr = value_range((0..na).flat_map(|k| (0..rows).map(move |r| (k, r))).map(|(k, r)| value(k, r)));
    let root = SVGBackend::new(path, CURVES).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let t_end = trace.times[rows - 1].max(1e-9);
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 18))
        .margin(10)
        .x_label_area_size(30)
        .y_label_area_size(50)
        .build_cartesian_2d(0.0..t_end, yr.0..yr.1)
        .map_err(plot_err)?;
    chart.configure_mesh().x_desc("t [s]").draw().map_err(plot_err)?;
    for k in 0..na {
        let col = color(k);
        let pts: Vec<(f64, f64)> = (0..rows).map(|r| (trace.times[r], value(k, r))).collect();
        chart
            .draw_series(LineSeries::new(pts, col.stroke_width(1)))
            .map_err(plot_err)?
            .label(trace.agents[k].id.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], col.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

fn plot_social(trace: &SimTrace, path: &Path) -> Result<()> {
    let rows = trace.rows();
    let na = trace.agents.len();
    let pairs: Vec<(usize, usize)> = (0..na)
        .flat_map(|k| (0..na).filter(move |&l| l != k).map(move |l| (k, l)))
        .collect();
    let yr = if pairs.is_empty() {
        (-1.0, 1.0)
    } else {
        value_range(pairs.iter().flat_map(|&(k, l)| (0..rows).map(move |r| trace.phi(k, l, r))))
    };
    let root = SVGBackend::new(path, CURVES).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let t_end = trace.times[rows - 1].max(1e-9);
    let mut chart = ChartBuilder::on(&root)
        .caption("social interaction φ(k,l)(t)", ("sans-serif", 18))
        .margin(10)
        .x_label_area_size(30)
        .y_label_area_size(50)
        .build_cartesian_2d(0.0..t_end, yr.0..yr.1)
        .map_err(plot_err)?;
    chart.configure_mesh().x_desc("t [s]").draw().map_err(plot_err)?;
    for (i, &(k, l)) in pairs.iter().enumerate() {
        let col = color(i);
        let pts: Vec<(f64, f64)> = (0..rows).map(|r| (trace.times[r], trace.phi(k, l, r))).collect();
        let series = chart
            .draw_series(LineSeries::new(pts, col.stroke_width(1)))
            .map_err(plot_err)?;
        if pairs.len() <= 12 {
            series
                .label(format!("{},{}", trace.agents[k].id, trace.agents[l].id))
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], col.stroke_width(2)));
        }
    }
    if pairs.len() <= 12 && !pairs.is_empty() {
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(plot_err)?;
    }
    root.present().map_err(plot_err)
}
