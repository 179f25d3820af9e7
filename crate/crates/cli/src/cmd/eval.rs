use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use serde_json::json;
use tsbias::evalkit::{self, AugmentedTask, Regime};
use tsbias::modelio::{ContextRecord, ForecastRecord};

use super::{summary, Summary, Table};
use crate::args::{AugmentArgs, Eval, MetricsArgs};
use crate::error::{usage, Result};
use crate::{check_distinct, read_records, Ctx, Outputs};

pub fn run(ctx: &Ctx, eval: Eval, out: &mut Outputs) -> Result<(&'static str, Summary)> {
    Ok(match eval {
        Eval::Scale(a) => ("eval scale", augment(ctx, a, false, out)?),
        Eval::Offset(a) => ("eval offset", augment(ctx, a, true, out)?),
        Eval::Metrics(a) => ("eval metrics", metrics(ctx, a, out)?),
    })
}

fn augment(ctx: &Ctx, a: AugmentArgs, offset: bool, out: &mut Outputs) -> Result<Summary> {
    let p = &ctx.params;
    let input: PathBuf = p.require("input", a.input)?;
    let path: PathBuf = p.require("out", a.out)?;
    let targets_path: PathBuf = p.require("targets-out", a.targets_out)?;
    check_distinct(&[&input], &[&path, &targets_path])?;
    let parameter: f64 = p.require("parameter", a.parameter)?;
    let default_regime = if offset { "high" } else { "large" };
    let regime: Regime = p.or::<String>("regime", a.regime, default_regime.into())?.parse()?;
    let records: Vec<ContextRecord> = read_records(&input)?;

    let mut contexts = Vec::with_capacity(records.len());
    let mut targets = Vec::with_capacity(records.len());
    for r in &records {
        let t = r.prediction_length;
        if t == 0 || r.values.len() <= t {
            return Err(usage(format!("record {}: needs prediction_length >= 1 and a non-empty context", r.id)));
        }
        let (c, y) = r.values.split_at(r.values.len() - t);
        let task = if offset {
            evalkit::offset_protocol(c, y, parameter, regime)?
        } else {
            evalkit::scale_protocol(c, y, parameter, regime)?
        };
        let protocol = if offset { "offset" } else { "scale" };
        let tag = |rec: ContextRecord, task: &AugmentedTask| {
            let mut rec = rec
                .tag("protocol", protocol)
                .tag("regime", format!("{regime:?}").to_lowercase())
                .tag("parameter", task.parameter)
                .tag("gamma", task.gamma)
                .tag("delta", task.delta);
            for (k, v) in &r.tags {
                rec.tags.entry(k.clone()).or_insert_with(|| v.clone());
            }
            rec.dt = r.dt;
            rec
        };
        contexts.push(tag(ContextRecord::new(r.id.clone(), task.context.clone(), t), &task));
        targets.push(tag(ContextRecord::new(r.id.clone(), task.target.clone(), t), &task));
    }
    out.records(&path, &contexts)?;
    out.records(&targets_path, &targets)?;
    Ok(summary! { "records" => contexts.len(), "regime" => format!("{regime:?}").to_lowercase(), "parameter" => parameter })
}

#[derive(Default, Clone)]
struct Acc {
    n: usize,
    mse: f64,
    mae: f64,
    wql: f64,
    wql_n: usize,
    mase: f64,
    mase_n: usize,
}

impl Acc {
    fn get(&self, metric: &str) -> Option<f64> {
        let n = self.n as f64;
        match metric {
            "mse" => Some(self.mse / n),
            "mae" => Some(self.mae / n),
            // Defined only when every record of the dataset carries it.
            "wql" => (self.wql_n == self.n).then(|| self.wql / n),
            "mase" => (self.mase_n == self.n).then(|| self.mase / n),
            _ => None,
        }
    }
}

fn tag_f64(r: &ContextRecord, key: &str, default: f64) -> Result<f64> {
    match r.tags.get(key) {
        None => Ok(default),
        Some(v) => v.parse().map_err(|_| usage(format!("record {}: tag {key}='{v}' is not a number", r.id))),
    }
}

/// Per-dataset means of each metric after undoing the augmentation map.
fn score(
    truth: &[ContextRecord],
    forecasts: &[ForecastRecord],
    contexts: Option<&HashMap<&str, &ContextRecord>>,
    season: usize,
) -> Result<BTreeMap<String, Acc>> {
    let by_id: HashMap<&str, &ForecastRecord> = forecasts.iter().map(|f| (f.id.as_str(), f)).collect();
    let missing: Vec<String> = truth.iter().filter(|t| !by_id.contains_key(t.id.as_str())).map(|t| t.id.clone()).collect();
    if !missing.is_empty() {
        return Err(tsbias::Error::Join { missing }.into());
    }
    let mut acc: BTreeMap<String, Acc> = BTreeMap::new();
    for t in truth {
        let f = by_id[t.id.as_str()];
        let (gamma, delta) = (tag_f64(t, "gamma", 1.0)?, tag_f64(t, "delta", 0.0)?);
        let point = f.point_or_median().ok_or_else(|| usage(format!("forecast {} has neither a point nor a median", f.id)))?;
        let point: Vec<f64> = point.iter().map(|y| gamma * y + delta).collect();
        let (mse, mae) = evalkit::point_errors(&t.values, &point)?;
        let wql = match &f.quantiles {
            Some(q) => Some(evalkit::wql(&t.values, &q.affine(gamma, delta))?),
            None => None,
        };
        let mase = match contexts {
            Some(c) => {
                let ctx = c.get(t.id.as_str()).ok_or_else(|| tsbias::Error::Join { missing: vec![t.id.clone()] })?;
                Some(evalkit::mase(&t.values, &point, &ctx.values, season)?)
            }
            None => None,
        };
        let e = acc.entry(t.tags.get("dataset").cloned().unwrap_or_else(|| "all".into())).or_default();
        e.n += 1;
        e.mse += mse;
        e.mae += mae;
        if let Some(w) = wql {
            e.wql += w;
            e.wql_n += 1;
        }
        if let Some(m) = mase {
            e.mase += m;
            e.mase_n += 1;
        }
    }
    Ok(acc)
}

fn metrics(ctx: &Ctx, a: MetricsArgs, out: &mut Outputs) -> Result<Summary> {
    let p = &ctx.params;
    let truth_path: PathBuf = p.require("truth", a.truth)?;
    let fc_path: PathBuf = p.require("forecasts", a.forecasts)?;
    let ctx_path: Option<PathBuf> = p.opt("contexts", a.contexts)?;
    let base_path: Option<PathBuf> = p.opt("baseline", a.baseline)?;
    let out_path: PathBuf = p.require("out", a.out)?;
    let summary_path: Option<PathBuf> = p.opt("summary", a.summary)?;
    let season = p.or("season", a.season, 1)?;
    let metric: String = p.or("metric", a.metric, "wql".into())?;
    if !["wql", "mse", "mae", "mase"].contains(&metric.as_str()) {
        return Err(usage(format!("unknown metric '{metric}'")));
    }
    let inputs: Vec<&std::path::Path> =
        [Some(&truth_path), Some(&fc_path), ctx_path.as_ref(), base_path.as_ref()].into_iter().flatten().map(|p| p.as_path()).collect();
    let outputs: Vec<&std::path::Path> = [Some(&out_path), summary_path.as_ref()].into_iter().flatten().map(|p| p.as_path()).collect();
    check_distinct(&inputs, &outputs)?;

    let truth: Vec<ContextRecord> = read_records(&truth_path)?;
    if truth.is_empty() {
        return Err(usage(format!("{} holds no records", truth_path.display())));
    }
    let forecasts: Vec<ForecastRecord> = read_records(&fc_path)?;
    let ctx_records: Option<Vec<ContextRecord>> = ctx_path.as_ref().map(|p| read_records(p)).transpose()?;
    let ctx_map: Option<HashMap<&str, &ContextRecord>> =
        ctx_records.as_ref().map(|v| v.iter().map(|r| (r.id.as_str(), r)).collect());
    let scores = score(&truth, &forecasts, ctx_map.as_ref(), season)?;
    let baseline = match &base_path {
        Some(bp) => Some(score(&truth, &read_records::<ForecastRecord>(bp)?, ctx_map.as_ref(), season)?),
        None => None,
    };

    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    let mut t = Table::new(&["dataset", "n", "mse", "mae", "wql", "mase", "relative"])?;
    let mut rel_scores = BTreeMap::new();
    let mut rel_base = BTreeMap::new();
    for (name, acc) in &scores {
        let relative = match &baseline {
            Some(b) => {
                let (s, bs) = (acc.get(&metric), b[name].get(&metric));
                let (s, bs) = s.zip(bs).ok_or_else(|| usage(format!("dataset {name}: {metric} is unavailable")))?;
                rel_scores.insert(name.clone(), s);
                rel_base.insert(name.clone(), bs);
                Some(s / bs)
            }
            None => None,
        };
        t.row(vec![
            name.clone(),
            acc.n.to_string(),
            opt(acc.get("mse")),
            opt(acc.get("mae")),
            opt(acc.get("wql")),
            opt(acc.get("mase")),
            opt(relative),
        ])?;
    }
    out.add(&out_path, t.finish()?);
    let relative = if baseline.is_some() { Some(evalkit::relative_geomean(&rel_scores, &rel_base)?) } else { None };

    let shared = |key: &str| {
        let first = truth[0].tags.get(key)?;
        truth.iter().all(|r| r.tags.get(key) == Some(first)).then(|| first.clone())
    };
    let regime = shared("regime");
    let parameter = shared("parameter").and_then(|s| s.parse::<f64>().ok());
    if let Some(sp) = &summary_path {
        let per: BTreeMap<&String, serde_json::Value> = scores
            .iter()
            .map(|(k, a)| (k, json!({"n": a.n, "mse": a.get("mse"), "mae": a.get("mae"), "wql": a.get("wql"), "mase": a.get("mase")})))
            .collect();
        out.json(
            sp,
            &json!({"regime": regime, "parameter": parameter, "metric": metric, "relative": relative, "datasets": per}),
        )?;
    }
    Ok(summary! {
        "datasets" => scores.len(),
        "records" => truth.len(),
        "metric" => metric,
        "regime" => regime,
        "parameter" => parameter,
        "relative" => relative,
    })
}
