//! Plain-text SVG charts: line/step charts over days and a summary bar chart.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::stats::SummaryStats;
use crate::scenario::{EvaluationResult, NUM_ACTIONS};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 450.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 30.0;
const MARGIN_TOP: f64 = 50.0;
const MARGIN_BOTTOM: f64 = 60.0;

const PALETTE: [&str; 6] = ["#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#7f7f7f"];

pub struct Series {
    pub label: String,
    pub values: Vec<f64>,
    /// Draw as a staircase instead of straight segments.
    pub step: bool,
}

/// A chart whose x axis is the day index `first_day..first_day + len`.
pub struct DayChart {
    pub title: String,
    pub y_label: String,
    pub first_day: usize,
    pub series: Vec<Series>,
    /// Fixed y range; derived from the data when absent.
    pub y_range: Option<(f64, f64)>,
    /// Explicit y tick positions with labels.
    pub y_ticks: Option<Vec<(f64, String)>>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">
<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>
<text x="{}" y="28" text-anchor="middle" font-size="16">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

/// Rounds a raw tick spacing up to 1, 2 or 5 times a power of ten.
fn nice_step(span: f64, target_ticks: usize) -> f64 {
    let raw = span / target_ticks.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let nice = if norm <= 1.0 {
        1.0
    } else if norm <= 2.0 {
        2.0
    } else if norm <= 5.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn format_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e5).contains(&a) {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.1e}")
    }
}

impl DayChart {
    fn days(&self) -> usize {
        self.series.iter().map(|s| s.values.len()).max().unwrap_or(0)
    }

    fn y_bounds(&self) -> (f64, f64) {
        if let Some(r) = self.y_range {
            return r;
        }
        let (lo, hi) = self
            .series
            .iter()
            .flat_map(|s| s.values.iter().copied())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        let lo = lo.min(0.0);
        let hi = if hi > lo { hi * 1.05 } else { lo + 1.0 };
        (lo, hi)
    }

    /// Maps a data point to SVG coordinates.
    pub fn project(&self, day_offset: f64, value: f64) -> (f64, f64) {
        let n = self.days().max(2) as f64;
        let (lo, hi) = self.y_bounds();
        let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        let x = MARGIN_LEFT + plot_w * day_offset / (n - 1.0);
        let y = MARGIN_TOP + plot_h * (1.0 - (value - lo) / (hi - lo));
        (x, y)
    }

    pub fn render(&self) -> Result<String> {
        let n = self.days();
        if n == 0 {
            return Err(Error::Empty(format!("chart `{}` has no data", self.title)));
        }
        if self.series.iter().flat_map(|s| &s.values).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("chart `{}`", self.title)));
        }
        let (lo, hi) = self.y_bounds();
        let mut out = String::new();
        header(&mut out, &self.title);

        let x0 = MARGIN_LEFT;
        let x1 = WIDTH - MARGIN_RIGHT;
        let y0 = HEIGHT - MARGIN_BOTTOM;
        let y1 = MARGIN_TOP;

        // y grid and ticks
        let ticks: Vec<(f64, String)> = match &self.y_ticks {
            Some(t) => t.clone(),
            None => {
                let step = nice_step(hi - lo, 6);
                let mut v = (lo / step).ceil() * step;
                let mut t = Vec::new();
                while v <= hi + step * 1e-9 {
                    t.push((v, format_tick(v)));
                    v += step;
                }
                t
            }
        };
        for (v, label) in &ticks {
            let (_, y) = self.project(0.0, *v);
            let _ = writeln!(
                out,
                r##"<line x1="{x0:.2}" y1="{y:.2}" x2="{x1:.2}" y2="{y:.2}" stroke="#dddddd"/>
<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
                x0 - 6.0,
                y + 4.0,
                escape(label)
            );
        }
        // x ticks every nice number of days
        let step = nice_step(n as f64, 10).max(1.0) as usize;
        let mut d = 0;
        while d < n {
            let (x, _) = self.project(d as f64, lo);
            let _ = writeln!(
                out,
                r##"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{:.2}" stroke="#000000"/>
<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
                y0 + 5.0,
                y0 + 20.0,
                d + self.first_day
            );
            d += step;
        }
        let _ = writeln!(
            out,
            r##"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="#000000"/>
<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="#000000"/>
<text x="{:.2}" y="{:.2}" text-anchor="middle">day</text>
<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"##,
            (x0 + x1) / 2.0,
            HEIGHT - 15.0,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            escape(&self.y_label)
        );

        for (k, s) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let mut points = String::new();
            for (d, &v) in s.values.iter().enumerate() {
                if s.step && d > 0 {
                    let (x, _) = self.project(d as f64, v);
                    let (_, y_prev) = self.project(d as f64, s.values[d - 1]);
                    let _ = write!(points, "{x:.2},{y_prev:.2} ");
                }
                let (x, y) = self.project(d as f64, v);
                let _ = write!(points, "{x:.2},{y:.2} ");
            }
            let _ = writeln!(
                out,
                r#"<polyline data-series="{}" fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
                escape(&s.label),
                points.trim_end()
            );
            let ly = MARGIN_TOP + 14.0 * k as f64;
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="12" height="4" fill="{color}"/>
<text x="{:.2}" y="{:.2}">{}</text>"#,
                x1 - 200.0,
                ly - 4.0,
                x1 - 184.0,
                ly,
                escape(&s.label)
            );
        }
        out.push_str("</svg>\n");
        Ok(out)
    }
}

/// ICU demand against bed capacity, both in percent of the population.
pub fn capacity_chart(result: &EvaluationResult, beds_fraction: &[f64], icu_fraction: f64) -> Result<DayChart> {
    if result.horizon() == 0 {
        return Err(Error::Empty("evaluation result".into()));
    }
    if beds_fraction.len() != result.horizon() {
        return Err(Error::ShapeMismatch("bed capacity series length".into()));
    }
    let demand = result.trajectory[1..].iter().map(|s| icu_fraction * s.i * 100.0).collect();
    let capacity = beds_fraction.iter().map(|b| b * 100.0).collect();
    Ok(DayChart {
        title: format!("ICU demand vs capacity (total reward {})", result.total_reward),
        y_label: "% of population".into(),
        first_day: 1,
        series: vec![
            Series { label: "ICU demand".into(), values: demand, step: false },
            Series { label: "ICU beds".into(), values: capacity, step: false },
        ],
        y_range: None,
        y_ticks: None,
    })
}

pub fn actions_chart(result: &EvaluationResult) -> Result<DayChart> {
    if result.horizon() == 0 {
        return Err(Error::Empty("evaluation result".into()));
    }
    Ok(DayChart {
        title: format!("Phase per day ({} changes)", result.actions.phase_changes()),
        y_label: "phase".into(),
        first_day: 1,
        series: vec![Series {
            label: "phase".into(),
            values: result.actions.as_slice().iter().map(|&a| f64::from(a)).collect(),
            step: true,
        }],
        y_range: Some((-0.2, (NUM_ACTIONS - 1) as f64 + 0.2)),
        y_ticks: Some((0..NUM_ACTIONS).map(|a| (a as f64, a.to_string())).collect()),
    })
}

/// Bars at the average with min/max whiskers, one per method.
pub fn summary_chart(stats: &[(String, SummaryStats)]) -> Result<String> {
    if stats.is_empty() {
        return Err(Error::Empty("summary statistics".into()));
    }
    let lo = stats.iter().map(|(_, s)| s.min).fold(0.0, f64::min);
    let hi = stats.iter().map(|(_, s)| s.max).fold(0.0, f64::max);
    let (lo, hi) = if hi > lo { (lo - 0.05 * (hi - lo), hi + 0.05 * (hi - lo)) } else { (lo - 1.0, hi + 1.0) };
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let y_of = |v: f64| MARGIN_TOP + plot_h * (1.0 - (v - lo) / (hi - lo));

    let mut out = String::new();
    header(&mut out, "Best total reward per run");
    let step = nice_step(hi - lo, 6);
    let mut v = (lo / step).ceil() * step;
    while v <= hi {
        let y = y_of(v);
        let _ = writeln!(
            out,
            r##"<line x1="{MARGIN_LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>
<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            WIDTH - MARGIN_RIGHT,
            MARGIN_LEFT - 6.0,
            y + 4.0,
            format_tick(v)
        );
        v += step;
    }
    let zero = y_of(0.0);
    let slot = plot_w / stats.len() as f64;
    for (k, (name, s)) in stats.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let cx = MARGIN_LEFT + slot * (k as f64 + 0.5);
        let bw = slot * 0.5;
        let top = y_of(s.avg).min(zero);
        let height = (y_of(s.avg) - zero).abs();
        let _ = writeln!(
            out,
            r##"<rect x="{:.2}" y="{top:.2}" width="{bw:.2}" height="{height:.2}" fill="{color}" fill-opacity="0.7"/>
<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="#000000"/>
<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#000000"/>
<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#000000"/>
<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{}</text>
<text x="{cx:.2}" y="{:.2}" text-anchor="middle">avg {:.2}</text>"##,
            cx - bw / 2.0,
            y_of(s.min),
            y_of(s.max),
            cx - bw / 4.0,
            y_of(s.min),
            cx + bw / 4.0,
            y_of(s.min),
            cx - bw / 4.0,
            y_of(s.max),
            cx + bw / 4.0,
            y_of(s.max),
            HEIGHT - MARGIN_BOTTOM + 20.0,
            escape(name),
            HEIGHT - MARGIN_BOTTOM + 36.0,
            s.avg
        );
    }
    let _ = writeln!(
        out,
        r##"<line x1="{MARGIN_LEFT}" y1="{zero:.2}" x2="{:.2}" y2="{zero:.2}" stroke="#000000"/>"##,
        WIDTH - MARGIN_RIGHT
    );
    out.push_str("</svg>\n");
    Ok(out)
}

fn write(path: PathBuf, body: &str) -> Result<PathBuf> {
    std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes `<prefix>infectious.svg`, `<prefix>actions.svg` and, when stats
/// are given, `<prefix>summary.svg`. Returns the paths written.
pub fn render_plots(
    result: &EvaluationResult,
    beds_fraction: &[f64],
    icu_fraction: f64,
    stats: Option<&[(String, SummaryStats)]>,
    path_prefix: &Path,
) -> Result<Vec<PathBuf>> {
    let with_suffix = |suffix: &str| {
        let mut name = path_prefix.as_os_str().to_owned();
        name.push(suffix);
        PathBuf::from(name)
    };
    let capacity = capacity_chart(result, beds_fraction, icu_fraction)?.render()?;
    let actions = actions_chart(result)?.render()?;
    let mut written = vec![
        write(with_suffix("infectious.svg"), &capacity)?,
        write(with_suffix("actions.svg"), &actions)?,
    ];
    if let Some(stats) = stats {
        written.push(write(with_suffix("summary.svg"), &summary_chart(stats)?)?);
    }
    Ok(written)
}
