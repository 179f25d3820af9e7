use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::{summary, Summary};
use crate::args::{ReportArgs, ReportKind};
use crate::error::{usage, Error, Result};
use crate::svg::{self, Band, Bar, Line, Plot};
use crate::{check_distinct, Ctx, Outputs};

/// A CSV table held as text cells.
struct Csv {
    path: PathBuf,
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Csv {
    fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let headers = r.headers().map_err(|e| csv_error(path, e))?.iter().map(String::from).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(String::from).collect()))
            .collect::<std::result::Result<Vec<Vec<String>>, _>>()
            .map_err(|e| csv_error(path, e))?;
        Ok(Csv { path: path.to_path_buf(), headers, rows })
    }

    fn index(&self, name: &str) -> Result<usize> {
        self.headers.iter().position(|h| h == name).ok_or_else(|| Error::Format {
            path: self.path.clone(),
            msg: format!("missing column '{name}'"),
        })
    }

    fn text(&self, name: &str) -> Result<Vec<String>> {
        let i = self.index(name)?;
        Ok(self.rows.iter().map(|r| r.get(i).cloned().unwrap_or_default()).collect())
    }

    fn num(&self, name: &str) -> Result<Vec<f64>> {
        self.text(name)?
            .iter()
            .enumerate()
            .map(|(row, v)| {
                v.parse::<f64>().map_err(|_| Error::Format {
                    path: self.path.clone(),
                    msg: format!("row {}: column '{name}' value '{v}' is not a number", row + 2),
                })
            })
            .collect()
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io { path: path.to_path_buf(), source },
        other => Error::Format { path: path.to_path_buf(), msg: format!("{other:?}") },
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn run(ctx: &Ctx, a: ReportArgs, out: &mut Outputs) -> Result<Summary> {
    let p = &ctx.params;
    let kind: ReportKind = p.require("kind", a.kind)?;
    let input: PathBuf = p.require("input", a.input)?;
    let path: PathBuf = p.require("out", a.out)?;
    check_distinct(&[&input], &[&path])?;
    let title: Option<String> = p.opt("title", a.title)?;
    let log_x = p.or("log-x", a.log_x, false)?;
    let log_y = p.or("log-y", a.log_y, false)?;
    let metric: String = p.or("metric", a.metric, "stable_rank".into())?;
    let t = Csv::read(&input)?;
    if t.rows.is_empty() {
        return Err(usage(format!("{} has no data rows", input.display())));
    }

    let plot = match kind {
        ReportKind::Rank => {
            let param = t.headers.get(1).cloned().ok_or_else(|| usage("rank table has too few columns"))?;
            let xs = t.num(&param)?;
            let ys = t.num(&metric)?;
            let samplers = t.text("sampler")?;
            let experiment = t.text("experiment")?.first().cloned().unwrap_or_default();
            let mut groups: BTreeMap<&str, BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
            for ((x, y), s) in xs.iter().zip(&ys).zip(&samplers) {
                groups.entry(s.as_str()).or_default().entry(x.to_bits()).or_default().push(*y);
            }
            let lines = groups
                .into_iter()
                .map(|(s, g)| {
                    let mut points: Vec<(f64, f64)> = g.into_iter().map(|(x, ys)| (f64::from_bits(x), median(ys))).collect();
                    points.sort_by(|a, b| a.0.total_cmp(&b.0));
                    Line { label: format!("{s} (median)"), points }
                })
                .collect();
            Plot {
                title: title.unwrap_or_else(|| format!("{experiment}: {metric}")),
                x_label: param,
                y_label: metric.clone(),
                log_x: true,
                log_y: true,
                lines,
                slope_one_guide: true,
                ..Default::default()
            }
        }
        ReportKind::Bridge => {
            let q = t.num("q")?;
            let (m, lo, hi) = (t.num("median")?, t.num("q30")?, t.num("q70")?);
            Plot {
                title: title.unwrap_or_else(|| "regression score vs flip rate".into()),
                x_label: "q".into(),
                y_label: "regression score".into(),
                lines: vec![Line { label: "median".into(), points: q.iter().copied().zip(m).collect() }],
                bands: vec![Band { label: "30-70%".into(), points: q.iter().zip(lo).zip(hi).map(|((&x, l), h)| (x, l, h)).collect() }],
                ..Default::default()
            }
        }
        ReportKind::Winrate => {
            let dk = t.num("delta_k")?;
            let (w, lo, hi) = (t.num("w")?, t.num("wilson_lo")?, t.num("wilson_hi")?);
            Plot {
                title: title.unwrap_or_else(|| "simple-future win rate".into()),
                x_label: "ΔK (bits)".into(),
                y_label: "win rate".into(),
                lines: vec![Line { label: "W".into(), points: dk.iter().copied().zip(w).collect() }],
                bands: vec![Band { label: "Wilson 95%".into(), points: dk.iter().zip(lo).zip(hi).map(|((&x, l), h)| (x, l, h)).collect() }],
                ..Default::default()
            }
        }
        ReportKind::Histogram => {
            let (lo, hi, c) = (t.num("lo")?, t.num("hi")?, t.num("count")?);
            Plot {
                title: title.unwrap_or_else(|| "histogram".into()),
                x_label: "value".into(),
                y_label: "count".into(),
                log_x,
                log_y,
                bars: lo.iter().zip(&hi).zip(&c).map(|((&x0, &x1), &y)| Bar { x0, x1, y }).collect(),
                ..Default::default()
            }
        }
        ReportKind::Bins => {
            let x = t.num("center")?;
            let (m, lo, hi) = (t.num("mean")?, t.num("lo")?, t.num("hi")?);
            Plot {
                title: title.unwrap_or_else(|| "binned score".into()),
                x_label: "K".into(),
                y_label: "score".into(),
                log_x,
                log_y,
                lines: vec![Line { label: "mean".into(), points: x.iter().copied().zip(m).collect() }],
                bands: vec![Band { label: "95% CI".into(), points: x.iter().zip(lo).zip(hi).map(|((&x, l), h)| (x, l, h)).collect() }],
                ..Default::default()
            }
        }
    };
    let bytes = svg::render(&plot)?;
    out.add(&path, bytes);
    Ok(summary! { "kind" => format!("{kind:?}").to_lowercase(), "rows" => t.rows.len() })
}
