//! Regression-to-the-mean instrumentation.
//!
//! The bridge experiment diffuses a periodic binary walk with XOR noise of
//! rate `q` and scores forecasts by their distance to the nearest branch.
//! Two oracle forecasters make the pipeline runnable without a model: the
//! mode oracle always stays on the walk, the mean oracle predicts the
//! conditional mean `(1 - q̂)·b + q̂·(1 - b)` with `q̂` estimated from the context.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::modelio::{ContextRecord, ForecastRecord, LogitDump};
use crate::par::{map_cells, Exec};
use crate::rng::cell_seed;
use crate::series::{mean, quantile_sorted};
use crate::siggen;

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionScore {
    pub scores: Vec<f64>,
    pub mean: f64,
}

/// `min(|y|, |1 - y|)` per sample.
pub fn regression_score(values: &[f64]) -> Result<RegressionScore> {
    ensure(!values.is_empty(), || "regression score of an empty forecast".into())?;
    let scores: Vec<f64> = values.iter().map(|y| y.abs().min((1.0 - y).abs())).collect();
    let m = mean(&scores);
    Ok(RegressionScore { scores, mean: m })
}

fn check_q(q: f64) -> Result<()> {
    ensure((0.0..=0.5).contains(&q), || format!("flip rate {q} outside [0, 1/2]"))
}

pub fn bridge_id(q: f64, trial: usize) -> String {
    format!("bridge-q{q}-t{trial}")
}

/// One diffused walk per (q, trial), tagged for joining.
pub fn bridge_contexts(
    q_grid: &[f64],
    trials: usize,
    steps_per_branch: usize,
    length: usize,
    horizon: usize,
    master_seed: u64,
) -> Result<Vec<ContextRecord>> {
    ensure(trials >= 1, || "trials must be at least 1".into())?;
    ensure(!q_grid.is_empty(), || "q grid is empty".into())?;
    ensure(horizon >= 1, || "horizon must be at least 1".into())?;
    for &q in q_grid {
        check_q(q)?;
    }
    let walk = siggen::periodic_walk(steps_per_branch, length)?;
    let mut out = Vec::with_capacity(q_grid.len() * trials);
    for &q in q_grid {
        for trial in 0..trials {
            let seed = cell_seed(master_seed, &[q.to_bits(), trial as u64]);
            let s = siggen::xor_diffuse(&walk, q, seed)?;
            out.push(
                ContextRecord::new(bridge_id(q, trial), s.into_values(), horizon)
                    .tag("experiment", "bridge")
                    .tag("q", q)
                    .tag("trial", trial)
                    .tag("steps_per_branch", steps_per_branch)
                    .tag("seed", seed),
            );
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Oracle {
    Mode,
    Mean,
}

impl std::str::FromStr for Oracle {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mode" => Ok(Oracle::Mode),
            "mean" => Ok(Oracle::Mean),
            other => Err(Error::validation(format!("unknown oracle '{other}'"))),
        }
    }
}

fn walk_value(t: usize, steps_per_branch: usize) -> f64 {
    if (t / steps_per_branch) % 2 == 0 {
        1.0
    } else {
        0.0
    }
}

/// Forecast of a bridge context by one of the oracles.
pub fn oracle_forecast(oracle: Oracle, ctx: &ContextRecord, steps_per_branch: usize) -> Result<ForecastRecord> {
    ensure(steps_per_branch >= 1, || "steps per branch must be positive".into())?;
    let l = ctx.values.len();
    ensure(l >= 1, || format!("context {} is empty", ctx.id))?;
    let future: Vec<f64> = (l..l + ctx.prediction_length).map(|t| walk_value(t, steps_per_branch)).collect();
    let values = match oracle {
        Oracle::Mode => future,
        Oracle::Mean => {
            let flips = ctx
                .values
                .iter()
                .enumerate()
                .filter(|(t, v)| (**v - walk_value(*t, steps_per_branch)).abs() > 0.5)
                .count();
            let q = flips as f64 / l as f64;
            future.iter().map(|b| (1.0 - q) * b + q * (1.0 - b)).collect()
        }
    };
    let producer = match oracle {
        Oracle::Mode => "oracle-mode",
        Oracle::Mean => "oracle-mean",
    };
    Ok(ForecastRecord::point(ctx.id.clone(), producer, values))
}

pub fn oracle_forecasts(
    oracle: Oracle,
    contexts: &[ContextRecord],
    steps_per_branch: usize,
    exec: Exec,
) -> Result<Vec<ForecastRecord>> {
    map_cells(exec, contexts, |c| oracle_forecast(oracle, c, steps_per_branch)).into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgePoint {
    pub q: f64,
    pub median: f64,
    pub q30: f64,
    pub q70: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeCurve {
    pub points: Vec<BridgePoint>,
}

/// Joins forecasts to contexts by id and summarizes mean regression scores per q.
pub fn bridge_aggregate(contexts: &[ContextRecord], forecasts: &[ForecastRecord]) -> Result<BridgeCurve> {
    let by_id: HashMap<&str, &ForecastRecord> = forecasts.iter().map(|f| (f.id.as_str(), f)).collect();
    let missing: Vec<String> = contexts
        .iter()
        .filter(|c| !by_id.contains_key(c.id.as_str()))
        .map(|c| c.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Join { missing });
    }
    let mut groups: BTreeMap<u64, (f64, Vec<f64>)> = BTreeMap::new();
    for c in contexts {
        let q: f64 = c
            .tags
            .get("q")
            .ok_or_else(|| Error::validation(format!("context {} has no q tag", c.id)))?
            .parse()
            .map_err(|_| Error::validation(format!("context {} has a malformed q tag", c.id)))?;
        check_q(q)?;
        let f = by_id[c.id.as_str()];
        let point = f
            .point_or_median()
            .ok_or_else(|| Error::validation(format!("forecast {} has neither a point nor a median", f.id)))?;
        ensure(point.len() == c.prediction_length, || {
            format!("forecast {} has length {}, context expects {}", f.id, point.len(), c.prediction_length)
        })?;
        // Nonnegative floats order the same as their bit patterns.
        groups.entry(q.to_bits()).or_insert((q, Vec::new())).1.push(regression_score(&point)?.mean);
    }
    let points = groups
        .into_values()
        .map(|(q, mut xs)| {
            xs.sort_by(f64::total_cmp);
            BridgePoint {
                q,
                median: quantile_sorted(&xs, 0.5),
                q30: quantile_sorted(&xs, 0.3),
                q70: quantile_sorted(&xs, 0.7),
                trials: xs.len(),
            }
        })
        .collect();
    Ok(BridgeCurve { points })
}

/// Probabilities of the outcomes 0, 1/2 and 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDist3 {
    pub q0: f64,
    pub qh: f64,
    pub q1: f64,
}

impl DiscreteDist3 {
    pub fn new(q0: f64, qh: f64, q1: f64) -> Result<Self> {
        let ok = [q0, qh, q1].iter().all(|p| (0.0..=1.0).contains(p)) && (q0 + qh + q1 - 1.0).abs() <= 1e-12;
        ensure(ok, || format!("({q0}, {qh}, {q1}) is not a probability vector"))?;
        Ok(DiscreteDist3 { q0, qh, q1 })
    }

    /// Barycentric grid point `(i/R, j/R, (R-i-j)/R)`.
    pub fn grid(i: usize, j: usize, r: usize) -> Self {
        let rf = r as f64;
        DiscreteDist3 { q0: i as f64 / rf, qh: j as f64 / rf, q1: (r - i - j) as f64 / rf }
    }

    /// Expected value, used as the point prediction.
    pub fn mean(&self) -> f64 {
        0.5 * self.qh + self.q1
    }

    fn probs(&self) -> [(f64, f64); 3] {
        [(0.0, self.q0), (0.5, self.qh), (1.0, self.q1)]
    }

    pub fn entropy(&self) -> f64 {
        self.probs().iter().filter(|(_, p)| *p > 0.0).map(|(_, p)| -p * p.ln()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub i: usize,
    pub j: usize,
    pub q: DiscreteDist3,
    pub yhat: f64,
    pub mse: f64,
    pub mae: f64,
    /// Clamped at `-ln(1e-300)` per term when infinite.
    pub ce: f64,
    pub ce_infinite: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossField {
    pub resolution: usize,
    pub truth: DiscreteDist3,
    pub points: Vec<LossPoint>,
    /// Indices into `points` within 1e-12 of each loss's minimum.
    pub mse_minima: Vec<usize>,
    pub mae_minima: Vec<usize>,
    pub ce_minima: Vec<usize>,
}

pub const CE_CLAMP: f64 = 1e-300;
pub const MINIMA_TOL: f64 = 1e-12;

pub fn mse_mae(truth: &DiscreteDist3, yhat: f64) -> (f64, f64) {
    truth.probs().iter().fold((0.0, 0.0), |(s, a), (v, p)| (s + p * (v - yhat).powi(2), a + p * (v - yhat).abs()))
}

fn minima(vals: impl Iterator<Item = f64> + Clone) -> Vec<usize> {
    let best = vals.clone().fold(f64::INFINITY, f64::min);
    vals.enumerate().filter(|(_, v)| *v - best <= MINIMA_TOL).map(|(i, _)| i).collect()
}

/// MSE, MAE and cross-entropy over the barycentric grid of resolution `r`.
pub fn loss_landscape(truth: &DiscreteDist3, r: usize) -> Result<LossField> {
    ensure(r >= 2, || "resolution must be at least 2".into())?;
    let truth = DiscreteDist3::new(truth.q0, truth.qh, truth.q1)?;
    let mut points = Vec::with_capacity((r + 1) * (r + 2) / 2);
    for i in 0..=r {
        for j in 0..=r - i {
            let q = DiscreteDist3::grid(i, j, r);
            let yhat = q.mean();
            let (mse, mae) = mse_mae(&truth, yhat);
            let mut ce = 0.0;
            let mut ce_infinite = false;
            for ((_, p), (_, m)) in truth.probs().iter().zip(q.probs()) {
                if *p > 0.0 {
                    ce_infinite |= m == 0.0;
                    ce -= p * m.max(CE_CLAMP).ln();
                }
            }
            points.push(LossPoint { i, j, q, yhat, mse, mae, ce, ce_infinite });
        }
    }
    Ok(LossField {
        resolution: r,
        truth,
        mse_minima: minima(points.iter().map(|p| p.mse)),
        mae_minima: minima(points.iter().map(|p| p.mae)),
        ce_minima: minima(points.iter().map(|p| p.ce)),
        points,
    })
}

/// `|d/dp MAE|` for truth `P(0) = p, P(1) = 1 - p`: `| |ŷ| - |1 - ŷ| |`.
pub fn mae_p_gradient(model: &DiscreteDist3) -> f64 {
    let y = model.mean();
    (y.abs() - (1.0 - y).abs()).abs()
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// Per-step probabilities of the requested bins, one row per step.
pub fn bin_prob_trace_rows(steps: &[Vec<f64>], bins: &[usize]) -> Result<Vec<Vec<f64>>> {
    let vocab = steps.first().map_or(0, Vec::len);
    ensure(steps.iter().all(|s| s.len() == vocab), || "logit rows differ in vocabulary size".into())?;
    ensure(steps.iter().flatten().all(|x| x.is_finite()), || "logits must be finite".into())?;
    if let Some(&b) = bins.iter().find(|&&b| b >= vocab) {
        return Err(Error::validation(format!("bin {b} outside vocabulary of size {vocab}")));
    }
    Ok(steps
        .iter()
        .map(|row| {
            let p = softmax(row);
            bins.iter().map(|&b| p[b]).collect()
        })
        .collect())
}

pub fn bin_prob_trace(dump: &LogitDump, bins: &[usize], base_dir: &Path) -> Result<Vec<Vec<f64>>> {
    bin_prob_trace_rows(&dump.steps(base_dir)?, bins)
}
