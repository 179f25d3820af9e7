use std::path::PathBuf;

use tsbias::geoprobe::{self, HistScale};
use tsbias::mlplab::{self, Experiment, Sampler, SweepConfig};
use tsbias::modelio::{tables, AttentionDump, ContextRecord, EmbeddingDump, ForecastRecord, LogProbDump, LogitDump};
use tsbias::regprobe::{self, DiscreteDist3, Oracle};
use tsbias::series::loglog_slope;
use tsbias::simplab;
use tsbias::Series;

use super::{summary, Summary, Table};
use crate::args::{GeometryArgs, GeometryMode, Probe, RankArgs, RegressionArgs, RegressionMode, SimplicityArgs};
use crate::error::{usage, Error, Result};
use crate::params::Grid;
use crate::{base_dir, check_distinct, read_records, Ctx, Outputs};

pub fn run(ctx: &Ctx, probe: Probe, out: &mut Outputs) -> Result<(&'static str, Summary)> {
    Ok(match probe {
        Probe::Rank(a) => ("probe rank", rank(ctx, a, out)?),
        Probe::Geometry(a) => ("probe geometry", geometry(ctx, a, out)?),
        Probe::Regression(a) => ("probe regression", regression(ctx, a, out)?),
        Probe::Simplicity(a) => ("probe simplicity", simplicity(ctx, a, out)?),
    })
}

fn rank(ctx: &Ctx, a: RankArgs, out: &mut Outputs) -> Result<Summary> {
    let p = &ctx.params;
    let name: String = p.require("experiment", a.experiment)?;
    let exp: Experiment = name.parse()?;
    let path: PathBuf = p.require("out", a.out)?;
    let mut cfg = SweepConfig::defaults(exp);
    cfg.k = p.or("k", a.k, cfg.k)?;
    cfg.m = p.or("m", a.m, cfg.m)?;
    cfg.d = p.or("d", a.d, cfg.d)?;
    cfg.n = p.or("n", a.n, cfg.n)?;
    cfg.omega = p.or("omega", a.omega, cfg.omega)?;
    cfg.alpha = p.or("alpha", a.alpha, cfg.alpha)?;
    cfg.beta = p.or("beta", a.beta, cfg.beta)?;
    if let Some(v) = p.opt::<Grid>("values", a.values)? {
        cfg.values = v.non_empty("values")?.to_uints("values")?;
    }
    cfg.trials = p.or("trials", a.trials, cfg.trials)?;
    cfg.exec = ctx.exec;
    let report = mlplab::rank_sweep(exp, &cfg, ctx.seed)?;
    out.add(&path, tables::rank_report_csv(&report)?);

    let sampler = match exp {
        Experiment::OmegaSweep => Sampler::SameBand,
        _ => Sampler::Disjoint,
    };
    let slope = |pts: Vec<(usize, f64)>| {
        let xs: Vec<f64> = pts.iter().map(|p| p.0 as f64).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        if xs.len() >= 2 {
            loglog_slope(&xs, &ys)
        } else {
            f64::NAN
        }
    };
    let finite = |x: f64| if x.is_finite() { Some(x) } else { None };
    Ok(summary! {
        "experiment" => exp.name(),
        "rows" => report.cells.len(),
        "stable_rank_slope" => finite(slope(report.median_by_value(sampler, |c| c.stable_rank))),
        "squared_stable_rank_slope" => finite(slope(report.median_by_value(sampler, |c| c.squared_stable_rank))),
        "sigma2_over_sigma1_slope" => finite(slope(report.mean_by_value(sampler, |c| c.sigma2_over_sigma1()))),
    })
}

fn geometry(ctx: &Ctx, a: GeometryArgs, out: &mut Outputs) -> Result<Summary> {
    let p = &ctx.params;
    let mode: GeometryMode = p.require("mode", a.mode)?;
    let input: PathBuf = p.require("input", a.input)?;
    let path: PathBuf = p.require("out", a.out)?;
    check_distinct(&[&input], &[&path])?;
    let base = base_dir(&input);
    let (bytes, rows) = match mode {
        GeometryMode::Norms => {
            let dumps: Vec<EmbeddingDump> = read_records(&input)?;
            let mut t = Table::new(&["id", "position", "norm"])?;
            let mut rows = 0;
            for d in &dumps {
                let norms = geoprobe::norm_profile(&d.view(&base).map_err(|e| Error::at(&input, e))?)?;
                for (i, n) in norms.values().iter().enumerate() {
                    t.row(vec![d.id.clone(), i.to_string(), n.to_string()])?;
                    rows += 1;
                }
            }
            (t.finish()?, rows)
        }
        GeometryMode::Pca => {
            let n = p.or("components", a.components, 2)?;
            let dumps: Vec<EmbeddingDump> = read_records(&input)?;
            let mut header = vec!["id".to_string(), "position".to_string()];
            header.extend((1..=n).map(|c| format!("pc{c}")));
            let mut t = Table::new(&header)?;
            let mut rows = 0;
            for d in &dumps {
                let proj = geoprobe::pca_project(&d.view(&base).map_err(|e| Error::at(&input, e))?, n)?;
                for pos in 0..proj.scores.ncols() {
                    let mut f = vec![d.id.clone(), pos.to_string()];
                    f.extend((0..n).map(|c| proj.scores[(c, pos)].to_string()));
                    t.row(f)?;
                    rows += 1;
                }
            }
            (t.finish()?, rows)
        }
        GeometryMode::Histogram => {
            let scale: HistScale = p.or::<String>("scale", a.scale, "linear".into())?.parse()?;
            let bins = p.or("bins", a.bins, 50)?;
            let dumps: Vec<AttentionDump> = read_records(&input)?;
            let mut values = Vec::new();
            for d in &dumps {
                values.extend(d.load(&base).map_err(|e| Error::at(&input, e))?);
            }
            let h = geoprobe::build_histogram(&values, scale, bins)?;
            (tables::histogram_csv(&h)?.into_bytes(), h.counts.len())
        }
        GeometryMode::Periodicity => {
            let motif = p.or("motif-len", a.motif_len, 64)?;
            let k = p.or("patch", a.patch, 16)?;
            let contexts: Vec<ContextRecord> = read_records(&input)?;
            let mut t = Table::new(&[
                "id".to_string(),
                "best_matching_k1".into(),
                format!("best_matching_k{k}"),
                "min_rel_distance_k1".into(),
                format!("min_rel_distance_k{k}"),
            ])?;
            for c in &contexts {
                let s = Series::new(c.values.clone(), c.dt, c.id.clone())?;
                t.row(vec![
                    c.id.clone(),
                    geoprobe::best_matching_score(&s, motif, 1)?.to_string(),
                    geoprobe::best_matching_score(&s, motif, k)?.to_string(),
                    geoprobe::min_rel_distance(&s, motif, 1)?.to_string(),
                    geoprobe::min_rel_distance(&s, motif, k)?.to_string(),
                ])?;
            }
            (t.finish()?, contexts.len())
        }
    };
    out.add(&path, bytes);
    Ok(summary! { "mode" => format!("{mode:?}").to_lowercase(), "rows" => rows })
}

fn regression(ctx: &Ctx, a: RegressionArgs, out: &mut Outputs) -> Result<Summary> {
    let p = &ctx.params;
    let mode: RegressionMode = p.require("mode", a.mode)?;
    let path: PathBuf = p.require("out", a.out)?;
    match mode {
        RegressionMode::Bridge => {
            let input: PathBuf = p.require("input", a.input)?;
            let contexts: Vec<ContextRecord> = read_records(&input)?;
            let oracle: Option<String> = p.opt("oracle", a.oracle)?;
            let fc_path: Option<PathBuf> = p.opt("forecasts", a.forecasts)?;
            let forecasts: Vec<ForecastRecord> = match (fc_path, oracle) {
                (Some(f), None) => {
                    check_distinct(&[&input, &f], &[&path])?;
                    read_records(&f)?
                }
                (None, Some(o)) => {
                    check_distinct(&[&input], &[&path])?;
                    let o: Oracle = o.parse()?;
                    let steps = contexts
                        .first()
                        .and_then(|c| c.tags.get("steps_per_branch"))
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| usage("bridge contexts need a steps_per_branch tag for the oracles"))?;
                    regprobe::oracle_forecasts(o, &contexts, steps, ctx.exec)?
                }
                _ => return Err(usage("give exactly one of --forecasts and --oracle")),
            };
            let curve = regprobe::bridge_aggregate(&contexts, &forecasts)?;
            out.add(&path, tables::bridge_curve_csv(&curve)?);
            let medians: Vec<f64> = curve.points.iter().map(|p| p.median).collect();
            Ok(summary! { "mode" => "bridge", "points" => curve.points.len(), "medians" => medians })
        }
        RegressionMode::Landscape => {
            let t = p.require::<Grid>("truth", a.truth)?;
            if t.0.len() != 3 {
                return Err(usage("--truth needs three probabilities for 0, 1/2 and 1"));
            }
            let truth = DiscreteDist3::new(t.0[0], t.0[1], t.0[2])?;
            let r = p.or("resolution", a.resolution, 60)?;
            let field = regprobe::loss_landscape(&truth, r)?;
            out.add(&path, tables::loss_field_csv(&field)?);
            Ok(summary! {
                "mode" => "landscape",
                "points" => field.points.len(),
                "mse_minima" => field.mse_minima.len(),
                "mae_minima" => field.mae_minima.len(),
                "ce_minima" => field.ce_minima.len(),
            })
        }
        RegressionMode::Trace => {
            let input: PathBuf = p.require("input", a.input)?;
            check_distinct(&[&input], &[&path])?;
            let bins: Vec<usize> = p.require::<Grid>("bin-ids", a.bin_ids)?.non_empty("bin-ids")?.to_uints("bin-ids")?;
            let dumps: Vec<LogitDump> = read_records(&input)?;
            let base = base_dir(&input);
            let mut header = vec!["id".to_string(), "step".to_string()];
            header.extend(bins.iter().map(|b| format!("bin{b}")));
            let mut t = Table::new(&header)?;
            let mut rows = 0;
            for d in &dumps {
                let steps = d.steps(&base).map_err(|e| Error::at(&input, e))?;
                for (step, row) in regprobe::bin_prob_trace_rows(&steps, &bins)?.iter().enumerate() {
                    let mut f = vec![d.id.clone(), step.to_string()];
                    f.extend(row.iter().map(|x| x.to_string()));
                    t.row(f)?;
                    rows += 1;
                }
            }
            out.add(&path, t.finish()?);
            Ok(summary! { "mode" => "trace", "rows" => rows })
        }
    }
}

fn simplicity(ctx: &Ctx, a: SimplicityArgs, out: &mut Outputs) -> Result<Summary> {
    let p = &ctx.params;
    let path: PathBuf = p.require("out", a.out)?;
    let cfg = super::gen::occam_config(ctx, a.family, None, None)?;
    let grid = p.or("dk-grid", a.dk_grid, Grid(simplab::DEFAULT_DK_GRID.iter().map(|&x| x as f64).collect()))?;
    let n = p.or("pairs", a.pairs, 200)?;
    let tie_eps = p.or("tie-eps", a.tie_eps, simplab::DEFAULT_TIE_EPS)?;
    let pairs = simplab::occam_pairs(&grid.non_empty("dk-grid")?.to_uints("dk-grid")?, n, &cfg, ctx.seed)?;
    let (deltas, scorer) = match p.opt::<PathBuf>("logprobs", a.logprobs)? {
        Some(lp) => {
            check_distinct(&[&lp], &[&path])?;
            let dumps: Vec<LogProbDump> = read_records(&lp)?;
            (simplab::deltas_from_dumps(&pairs, &dumps)?, "logprobs")
        }
        None => {
            let sigma = p.or("sigma-ref", a.sigma_ref, 1.0)?;
            let d = pairs
                .iter()
                .map(|pair| simplab::reference_score(pair, sigma).map(|(s, c)| s - c))
                .collect::<tsbias::Result<Vec<_>>>()?;
            (d, "reference")
        }
    };
    let curve = simplab::win_rate_curve(&pairs, &deltas, tie_eps)?;
    out.add(&path, tables::win_rate_csv(&curve)?);
    let bins: Option<usize> = p.opt("bins", a.bins)?;
    let bins_out: Option<PathBuf> = p.opt("bins-out", a.bins_out)?;
    match (bins, bins_out) {
        (Some(b), Some(bp)) => {
            let samples: Vec<(f64, f64)> = pairs.iter().zip(&deltas).map(|(p, d)| (p.delta_k as f64, *d)).collect();
            out.add(&bp, tables::bin_stats_csv(&simplab::quantile_bins(&samples, b)?)?);
        }
        (None, None) => {}
        _ => return Err(usage("--bins and --bins-out must be given together")),
    }
    let w: Vec<f64> = curve.iter().map(|c| c.w).collect();
    Ok(summary! { "scorer" => scorer, "pairs" => pairs.len(), "win_rates" => w })
}
