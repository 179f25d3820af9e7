//! Hand-emitted static SVG plots on a fixed 800x500 canvas.
//!
//! Coordinates are printed with two decimals and elements are emitted in a
//! fixed order, so identical inputs give identical bytes.

use std::fmt::Write;

use crate::error::{usage, Result};

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 500.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Debug, Clone, Default)]
pub struct Line {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Shaded region between `lo` and `hi` at each `x`.
#[derive(Debug, Clone, Default)]
pub struct Band {
    pub label: String,
    pub points: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone, Copy)]
pub struct Bar {
    pub x0: f64,
    pub x1: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub lines: Vec<Line>,
    pub bands: Vec<Band>,
    pub bars: Vec<Bar>,
    /// Dashed slope-1 reference through the first point of the first line (log-log only).
    pub slope_one_guide: bool,
}

struct Axis {
    log: bool,
    lo: f64,
    hi: f64,
    px0: f64,
    px1: f64,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool, px0: f64, px1: f64) -> Option<Self> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in values.filter(|v| v.is_finite() && (!log || *v > 0.0)) {
            let t = if log { v.log10() } else { v };
            lo = lo.min(t);
            hi = hi.max(t);
        }
        if !lo.is_finite() {
            return None;
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        } else if !log {
            let pad = 0.05 * (hi - lo);
            lo -= pad;
            hi += pad;
        }
        Some(Axis { log, lo, hi, px0, px1 })
    }

    fn map(&self, v: f64) -> Option<f64> {
        if !v.is_finite() || (self.log && v <= 0.0) {
            return None;
        }
        let t = if self.log { v.log10() } else { v };
        Some(self.px0 + (t - self.lo) / (self.hi - self.lo) * (self.px1 - self.px0))
    }

    /// Tick positions (data units) and labels.
    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            let (a, b) = (self.lo.ceil() as i32, self.hi.floor() as i32);
            if b >= a {
                return (a..=b).map(|k| (10f64.powi(k), format!("1e{k}"))).collect();
            }
            let mid = 10f64.powf(0.5 * (self.lo + self.hi));
            return vec![(mid, fmt_num(mid))];
        }
        let raw = (self.hi - self.lo) / 5.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
        let first = (self.lo / step).ceil() as i64;
        let last = (self.hi / step).floor() as i64;
        (first..=last).map(|i| i as f64 * step).map(|v| (v, fmt_num(v))).collect()
    }
}

fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e5).contains(&a) {
        return format!("{v:.1e}");
    }
    let s = format!("{v:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn render(plot: &Plot) -> Result<String> {
    let xs = plot
        .lines
        .iter()
        .flat_map(|l| l.points.iter().map(|p| p.0))
        .chain(plot.bands.iter().flat_map(|b| b.points.iter().map(|p| p.0)))
        .chain(plot.bars.iter().flat_map(|b| [b.x0, b.x1]));
    let ys = plot
        .lines
        .iter()
        .flat_map(|l| l.points.iter().map(|p| p.1))
        .chain(plot.bands.iter().flat_map(|b| b.points.iter().flat_map(|p| [p.1, p.2])))
        .chain(plot.bars.iter().flat_map(|b| [b.y, if plot.log_y { f64::NAN } else { 0.0 }]));
    let (x_end, y_end) = (WIDTH - RIGHT, HEIGHT - BOTTOM);
    let xa = Axis::fit(xs, plot.log_x, LEFT, x_end).ok_or_else(|| usage("nothing to plot"))?;
    let ya = Axis::fit(ys, plot.log_y, y_end, TOP).ok_or_else(|| usage("nothing to plot"))?;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#, (LEFT + x_end) / 2.0, esc(&plot.title));

    for (v, label) in xa.ticks() {
        if let Some(px) = xa.map(v) {
            let _ = writeln!(s, r##"<line x1="{px:.2}" y1="{TOP:.2}" x2="{px:.2}" y2="{y_end:.2}" stroke="#e5e5e5"/>"##);
            let _ = writeln!(s, r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, y_end + 18.0, esc(&label));
        }
    }
    for (v, label) in ya.ticks() {
        if let Some(py) = ya.map(v) {
            let _ = writeln!(s, r##"<line x1="{LEFT:.2}" y1="{py:.2}" x2="{x_end:.2}" y2="{py:.2}" stroke="#e5e5e5"/>"##);
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 6.0, py + 4.0, esc(&label));
        }
    }
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT:.2}" y="{TOP:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        x_end - LEFT,
        y_end - TOP
    );
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, (LEFT + x_end) / 2.0, HEIGHT - 16.0, esc(&plot.x_label));
    let _ = writeln!(
        s,
        r#"<text x="20" y="{0:.2}" text-anchor="middle" transform="rotate(-90 20 {0:.2})">{1}</text>"#,
        (TOP + y_end) / 2.0,
        esc(&plot.y_label)
    );

    let y_base = ya.map(if plot.log_y { 10f64.powf(ya.lo) } else { 0.0 }).unwrap_or(y_end).clamp(TOP, y_end);
    for b in &plot.bars {
        if let (Some(x0), Some(x1), Some(y)) = (xa.map(b.x0), xa.map(b.x1), ya.map(b.y)) {
            let (top, h) = (y.min(y_base), (y - y_base).abs());
            let _ = writeln!(
                s,
                r##"<rect x="{x0:.2}" y="{top:.2}" width="{:.2}" height="{h:.2}" fill="#1f77b4" fill-opacity="0.7"/>"##,
                (x1 - x0).max(0.0)
            );
        }
    }

    let mut legend: Vec<(String, &str, bool)> = Vec::new();
    for (i, b) in plot.bands.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let upper: Vec<(f64, f64)> = b.points.iter().filter_map(|p| Some((xa.map(p.0)?, ya.map(p.2)?))).collect();
        let lower: Vec<(f64, f64)> = b.points.iter().rev().filter_map(|p| Some((xa.map(p.0)?, ya.map(p.1)?))).collect();
        if upper.is_empty() {
            continue;
        }
        let pts: Vec<String> = upper.iter().chain(&lower).map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(s, r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, pts.join(" "));
        legend.push((b.label.clone(), color, true));
    }

    if plot.slope_one_guide && plot.log_x && plot.log_y {
        if let Some(&(x0, y0)) = plot.lines.first().and_then(|l| l.points.iter().find(|p| p.0 > 0.0 && p.1 > 0.0)) {
            let (a, b) = (10f64.powf(xa.lo), 10f64.powf(xa.hi));
            if let (Some(px0), Some(py0), Some(px1), Some(py1)) =
                (xa.map(a), ya.map(y0 * a / x0), xa.map(b), ya.map(y0 * b / x0))
            {
                let _ = writeln!(
                    s,
                    r##"<line x1="{px0:.2}" y1="{py0:.2}" x2="{px1:.2}" y2="{py1:.2}" stroke="#777777" stroke-dasharray="6 4"/>"##
                );
                legend.push(("slope 1".into(), "#777777", false));
            }
        }
    }

    let _ = writeln!(s, r#"<clipPath id="plot-area"><rect x="{LEFT:.2}" y="{TOP:.2}" width="{:.2}" height="{:.2}"/></clipPath>"#, x_end - LEFT, y_end - TOP);
    for (i, l) in plot.lines.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<(f64, f64)> = l.points.iter().filter_map(|p| Some((xa.map(p.0)?, ya.map(p.1)?))).collect();
        if pts.is_empty() {
            continue;
        }
        let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2" clip-path="url(#plot-area)"/>"#,
            coords.join(" ")
        );
        for (x, y) in &pts {
            let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#);
        }
        legend.push((l.label.clone(), color, false));
    }

    for (i, (label, color, filled)) in legend.iter().enumerate() {
        let y = TOP + 10.0 + 20.0 * i as f64;
        let x = x_end + 12.0;
        if *filled {
            let _ = writeln!(s, r#"<rect x="{x:.2}" y="{:.2}" width="18" height="10" fill="{color}" fill-opacity="0.2"/>"#, y - 5.0);
        } else {
            let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="2"/>"#, x + 18.0);
        }
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, x + 24.0, y + 4.0, esc(label));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Plot {
        Plot {
            title: "t <1>".into(),
            log_x: true,
            log_y: true,
            slope_one_guide: true,
            lines: vec![Line { label: "a".into(), points: vec![(2.0, 3.0), (4.0, 5.0), (8.0, 9.0)] }],
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_and_escaped() {
        let a = render(&sample()).unwrap();
        assert_eq!(a, render(&sample()).unwrap());
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert!(a.contains("t &lt;1&gt;"));
        assert!(a.contains(r#"width="800" height="500""#));
        assert!(a.contains("stroke-dasharray"));
    }

    #[test]
    fn nonpositive_values_are_dropped_on_log_axes() {
        let mut p = sample();
        p.lines[0].points.push((0.0, 1.0));
        let out = render(&p).unwrap();
        assert_eq!(out.matches("<circle").count(), 3);
    }

    #[test]
    fn empty_plot_is_rejected() {
        assert!(render(&Plot::default()).is_err());
    }

    #[test]
    fn linear_ticks_are_round() {
        let ax = Axis { log: false, lo: 0.0, hi: 0.5, px0: 0.0, px1: 1.0 };
        let labels: Vec<String> = ax.ticks().into_iter().map(|t| t.1).collect();
        assert_eq!(labels, ["0", "0.1", "0.2", "0.3", "0.4", "0.5"]);
    }
}
