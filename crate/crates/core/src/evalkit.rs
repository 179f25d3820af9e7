//! Forecast metrics and the scale/offset augmentation protocols.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::spectral;

pub const DECILES: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileForecast {
    pub levels: Vec<f64>,
    /// One sequence per level, all of the same length.
    pub values: Vec<Vec<f64>>,
}

impl QuantileForecast {
    pub fn new(levels: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        ensure(!levels.is_empty(), || "quantile forecast needs at least one level".into())?;
        ensure(levels.iter().all(|&q| q > 0.0 && q < 1.0), || "quantile levels must lie in (0, 1)".into())?;
        ensure(levels.windows(2).all(|w| w[0] < w[1]), || "quantile levels must be strictly ascending".into())?;
        ensure(values.len() == levels.len(), || {
            format!("{} levels but {} sequences", levels.len(), values.len())
        })?;
        let t = values[0].len();
        ensure(values.iter().all(|v| v.len() == t), || "quantile sequences differ in length".into())?;
        Ok(QuantileForecast { levels, values })
    }

    /// Every level predicts the same sequence.
    pub fn degenerate(levels: &[f64], point: &[f64]) -> Result<Self> {
        Self::new(levels.to_vec(), vec![point.to_vec(); levels.len()])
    }

    pub fn horizon(&self) -> usize {
        self.values[0].len()
    }

    pub fn median(&self) -> Option<Vec<f64>> {
        self.levels.iter().position(|&q| q == 0.5).map(|i| self.values[i].clone())
    }

    /// Applies `y -> gamma*y + delta` to every level.
    pub fn affine(&self, gamma: f64, delta: f64) -> Self {
        QuantileForecast {
            levels: self.levels.clone(),
            values: self.values.iter().map(|v| v.iter().map(|y| gamma * y + delta).collect()).collect(),
        }
    }
}

fn same_len(a: &[f64], b: &[f64]) -> Result<()> {
    ensure(a.len() == b.len(), || format!("length mismatch: {} vs {}", a.len(), b.len()))
}

/// Weighted quantile loss, averaged over levels and normalized by `Σ|y|`.
pub fn wql(truth: &[f64], forecast: &QuantileForecast) -> Result<f64> {
    same_len(truth, &forecast.values[0])?;
    let scale: f64 = truth.iter().map(|y| y.abs()).sum();
    ensure(scale > 0.0, || "WQL is undefined for an all-zero target".into())?;
    let mut total = 0.0;
    for (q, pred) in forecast.levels.iter().zip(&forecast.values) {
        for (y, p) in truth.iter().zip(pred) {
            total += 2.0 * (q * (y - p).max(0.0) + (1.0 - q) * (p - y).max(0.0));
        }
    }
    Ok(total / (forecast.levels.len() as f64 * scale))
}

/// Mean absolute error scaled by the in-sample seasonal-naive error.
pub fn mase(truth: &[f64], forecast: &[f64], context: &[f64], season: usize) -> Result<f64> {
    same_len(truth, forecast)?;
    ensure(!truth.is_empty(), || "empty forecast".into())?;
    ensure(season >= 1 && context.len() > season, || {
        format!("context of length {} is too short for season {season}", context.len())
    })?;
    let naive: f64 = context.windows(season + 1).map(|w| (w[season] - w[0]).abs()).sum::<f64>()
        / (context.len() - season) as f64;
    if naive == 0.0 {
        return Err(Error::DegenerateScale("seasonal-naive error of the context is zero".into()));
    }
    let mae: f64 = truth.iter().zip(forecast).map(|(y, p)| (y - p).abs()).sum::<f64>() / truth.len() as f64;
    Ok(mae / naive)
}

/// `(mse, mae)`.
pub fn point_errors(truth: &[f64], forecast: &[f64]) -> Result<(f64, f64)> {
    same_len(truth, forecast)?;
    ensure(!truth.is_empty(), || "empty forecast".into())?;
    let n = truth.len() as f64;
    let mse = truth.iter().zip(forecast).map(|(y, p)| (y - p).powi(2)).sum::<f64>() / n;
    let mae = truth.iter().zip(forecast).map(|(y, p)| (y - p).abs()).sum::<f64>() / n;
    Ok((mse, mae))
}

/// Relative DFT-magnitude error at the bin nearest `target_freq` (cycles/sample).
pub fn frequency_loss(truth: &[f64], forecast: &[f64], target_freq: f64) -> Result<f64> {
    same_len(truth, forecast)?;
    ensure(truth.len() >= 8, || "frequency loss needs at least 8 samples".into())?;
    ensure(target_freq.is_finite(), || "target frequency must be finite".into())?;
    let bin = spectral::nearest_bin(target_freq, truth.len());
    let at = spectral::dft_magnitude(truth, bin);
    let af = spectral::dft_magnitude(forecast, bin);
    Ok((at - af).abs() / at.max(1e-12))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// Forecast the large-scale motif (first half shrunk).
    Large,
    /// Forecast the small-scale motif (second half shrunk).
    Small,
    /// Forecast the lifted final segment.
    High,
    /// Forecast the unshifted final segment after a lifted middle.
    Low,
}

impl std::str::FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "large" => Ok(Regime::Large),
            "small" => Ok(Regime::Small),
            "high" => Ok(Regime::High),
            "low" => Ok(Regime::Low),
            other => Err(Error::validation(format!("unknown regime '{other}'"))),
        }
    }
}

/// An augmented context plus the affine map applied to forecasts before scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedTask {
    pub context: Vec<f64>,
    pub target: Vec<f64>,
    pub gamma: f64,
    pub delta: f64,
    pub regime: Regime,
    /// α for scale tasks, β for offset tasks.
    pub parameter: f64,
}

impl AugmentedTask {
    pub fn renormalize(&self, forecast: &[f64]) -> Vec<f64> {
        forecast.iter().map(|y| self.gamma * y + self.delta).collect()
    }

    pub fn renormalize_quantiles(&self, forecast: &QuantileForecast) -> QuantileForecast {
        forecast.affine(self.gamma, self.delta)
    }
}

/// Splits the context into halves and shrinks one of them by `alpha`.
pub fn scale_protocol(context: &[f64], target: &[f64], alpha: f64, regime: Regime) -> Result<AugmentedTask> {
    ensure(alpha >= 1.0 && alpha.is_finite(), || format!("alpha must be a finite value >= 1, got {alpha}"))?;
    ensure(!context.is_empty() && context.len() % 2 == 0, || {
        format!("context length {} cannot be split evenly into two halves", context.len())
    })?;
    let h = context.len() / 2;
    let (mut x1, mut x2) = (context[..h].to_vec(), context[h..].to_vec());
    let gamma = match regime {
        Regime::Large => {
            x1.iter_mut().for_each(|x| *x /= alpha);
            1.0
        }
        Regime::Small => {
            x2.iter_mut().for_each(|x| *x /= alpha);
            alpha
        }
        other => return Err(Error::validation(format!("{other:?} is not a scale regime"))),
    };
    x1.extend(x2);
    Ok(AugmentedTask { context: x1, target: target.to_vec(), gamma, delta: 0.0, regime, parameter: alpha })
}

/// Splits the context into thirds and shifts two of them by `beta`.
pub fn offset_protocol(context: &[f64], target: &[f64], beta: f64, regime: Regime) -> Result<AugmentedTask> {
    ensure(beta >= 0.0 && beta.is_finite(), || format!("beta must be a finite value >= 0, got {beta}"))?;
    ensure(!context.is_empty() && context.len() % 3 == 0, || {
        format!("context length {} is not divisible by 3", context.len())
    })?;
    let t = context.len() / 3;
    let mut out = context.to_vec();
    let (shifts, delta) = match regime {
        Regime::High => ([0.0, -beta, beta], -beta),
        Regime::Low => ([-beta, beta, 0.0], 0.0),
        other => return Err(Error::validation(format!("{other:?} is not an offset regime"))),
    };
    for (seg, shift) in shifts.iter().enumerate() {
        out[seg * t..(seg + 1) * t].iter_mut().for_each(|x| *x += shift);
    }
    Ok(AugmentedTask { context: out, target: target.to_vec(), gamma: 1.0, delta, regime, parameter: beta })
}

/// `exp(mean log(score/baseline))` over datasets.
pub fn relative_geomean(scores: &BTreeMap<String, f64>, baseline: &BTreeMap<String, f64>) -> Result<f64> {
    ensure(!scores.is_empty(), || "no datasets to aggregate".into())?;
    ensure(scores.keys().eq(baseline.keys()), || "score and baseline datasets differ".into())?;
    let mut acc = 0.0;
    for (k, &s) in scores {
        let b = baseline[k];
        ensure(s > 0.0 && b > 0.0 && s.is_finite() && b.is_finite(), || {
            format!("dataset {k}: losses must be positive and finite")
        })?;
        acc += (s / b).ln();
    }
    Ok((acc / scores.len() as f64).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn sine(n: usize, f: f64, amp: f64) -> Vec<f64> {
        (0..n).map(|t| amp * (2.0 * PI * f * t as f64).sin()).collect()
    }

    #[test]
    fn wql_examples() {
        let y = [1.0, 2.0, -3.0];
        let perfect = QuantileForecast::degenerate(&DECILES, &y).unwrap();
        assert_eq!(wql(&y, &perfect).unwrap(), 0.0);
        let shifted = QuantileForecast::new(vec![0.5], vec![vec![2.0, 2.0]]).unwrap();
        assert!((wql(&[1.0, 1.0], &shifted).unwrap() - 1.0).abs() < 1e-12);
        assert!(wql(&[0.0, 0.0], &shifted).is_err());

        let sym = QuantileForecast::new(vec![0.2, 0.8], vec![vec![0.5, 1.5], vec![1.5, 2.5]]).unwrap();
        let lo = QuantileForecast::new(vec![0.2], vec![sym.values[0].clone()]).unwrap();
        let hi = QuantileForecast::new(vec![0.8], vec![sym.values[1].clone()]).unwrap();
        assert!((wql(&[1.0, 2.0], &lo).unwrap() - wql(&[1.0, 2.0], &hi).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn quantile_forecast_validation() {
        assert!(QuantileForecast::new(vec![0.5, 0.5], vec![vec![1.0], vec![1.0]]).is_err());
        assert!(QuantileForecast::new(vec![0.0], vec![vec![1.0]]).is_err());
        assert!(QuantileForecast::new(vec![0.1, 0.9], vec![vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn mase_examples() {
        assert_eq!(mase(&[1.0, 2.0], &[1.0, 2.0], &[0.0, 1.0, 3.0], 1).unwrap(), 0.0);
        assert!((mase(&[1.0, 1.0], &[2.0, 2.0], &[0.0, 1.0, 0.0, 1.0], 1).unwrap() - 1.0).abs() < 1e-12);
        let periodic = [1.0, 2.0, 1.0, 2.0, 1.0, 2.0];
        assert!(matches!(mase(&[1.0, 2.0], &[1.0, 2.0], &periodic, 2), Err(Error::DegenerateScale(_))));
        assert!(mase(&[1.0], &[1.0], &[1.0], 1).is_err());
    }

    #[test]
    fn point_error_examples() {
        assert_eq!(point_errors(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), (0.0, 0.0));
        assert_eq!(point_errors(&[0.0, 0.0], &[1.0, -1.0]).unwrap(), (1.0, 1.0));
        assert!(point_errors(&[0.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn frequency_loss_examples() {
        let n = 256;
        let f = 13.3 / n as f64;
        let y = sine(n, f, 1.0);
        assert_eq!(frequency_loss(&y, &y, f).unwrap(), 0.0);
        assert!((frequency_loss(&y, &vec![0.0; n], f).unwrap() - 1.0).abs() < 1e-12);
        let mix: Vec<f64> = sine(n, f, 1.0).iter().zip(sine(n, 0.31, 1.0)).map(|(a, b)| a + b).collect();
        let halved: Vec<f64> = sine(n, f, 0.5).iter().zip(sine(n, 0.31, 1.0)).map(|(a, b)| a + b).collect();
        assert!((frequency_loss(&mix, &halved, f).unwrap() - 0.5).abs() < 0.05);
        assert!(frequency_loss(&y[..4], &y[..4], f).is_err());
    }

    #[test]
    fn scale_protocol_examples() {
        let ctx: Vec<f64> = (1..=8).map(f64::from).collect();
        let target = vec![9.0, 10.0];
        for r in [Regime::Large, Regime::Small] {
            let t = scale_protocol(&ctx, &target, 1.0, r).unwrap();
            assert_eq!(t.context, ctx);
            assert_eq!((t.gamma, t.delta), (1.0, 0.0));
        }
        let t = scale_protocol(&ctx, &target, 4.0, Regime::Small).unwrap();
        assert_eq!(t.context[4..].iter().cloned().fold(0.0, f64::max), 2.0);
        assert_eq!(t.gamma, 4.0);
        let model_out: Vec<f64> = target.iter().map(|y| y / 4.0).collect();
        let q = QuantileForecast::degenerate(&DECILES, &model_out).unwrap();
        assert_eq!(wql(&target, &t.renormalize_quantiles(&q)).unwrap(), 0.0);

        let t = scale_protocol(&ctx, &target, 4.0, Regime::Large).unwrap();
        let q = QuantileForecast::degenerate(&DECILES, &target).unwrap();
        assert_eq!(wql(&target, &t.renormalize_quantiles(&q)).unwrap(), 0.0);

        assert!(scale_protocol(&ctx[..7], &target, 2.0, Regime::Large).is_err());
        assert!(scale_protocol(&ctx, &target, 0.5, Regime::Large).is_err());
        assert!(scale_protocol(&ctx, &target, 2.0, Regime::High).is_err());
    }

    #[test]
    fn offset_protocol_examples() {
        let ctx: Vec<f64> = (0..9).map(f64::from).collect();
        let target = vec![9.0, 10.0];
        for r in [Regime::High, Regime::Low] {
            let t = offset_protocol(&ctx, &target, 0.0, r).unwrap();
            assert_eq!(t.context, ctx);
            assert_eq!((t.gamma, t.delta), (1.0, 0.0));
        }
        let t = offset_protocol(&ctx, &target, 2.5, Regime::High).unwrap();
        let m = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((m(&t.context[6..]) - m(&ctx[6..]) - 2.5).abs() < 1e-12);
        let lifted: Vec<f64> = target.iter().map(|y| y + 2.5).collect();
        let (mse, mae) = point_errors(&target, &t.renormalize(&lifted)).unwrap();
        assert_eq!((mse, mae), (0.0, 0.0));
        assert!(offset_protocol(&ctx[..8], &target, 1.0, Regime::High).is_err());
        assert!(offset_protocol(&ctx, &target, -1.0, Regime::Low).is_err());
    }

    #[test]
    fn geomean_examples() {
        let m = |v: &[(&str, f64)]| v.iter().map(|(k, x)| (k.to_string(), *x)).collect::<BTreeMap<_, _>>();
        let base = m(&[("a", 1.0), ("b", 3.0)]);
        assert_eq!(relative_geomean(&base, &base).unwrap(), 1.0);
        assert!((relative_geomean(&m(&[("a", 2.0), ("b", 1.5)]), &base).unwrap() - 1.0).abs() < 1e-12);
        assert!((relative_geomean(&m(&[("a", 4.0), ("b", 3.0)]), &base).unwrap() - 2.0).abs() < 1e-12);
        assert!(relative_geomean(&m(&[("a", 0.0), ("b", 3.0)]), &base).is_err());
        assert!(relative_geomean(&m(&[("a", 1.0)]), &base).is_err());
    }

    proptest! {
        #[test]
        fn wql_scale_free(y in prop::collection::vec(0.1f64..10.0, 1..20), noise in prop::collection::vec(-1.0f64..1.0, 20), c in 0.01f64..100.0) {
            let pred: Vec<f64> = y.iter().zip(&noise).map(|(a, e)| a + e).collect();
            let q = QuantileForecast::new(vec![0.3], vec![pred.clone()]).unwrap();
            let ys: Vec<f64> = y.iter().map(|a| c * a).collect();
            let qs = q.affine(c, 0.0);
            let a = wql(&y, &q).unwrap();
            prop_assert!((wql(&ys, &qs).unwrap() - a).abs() <= 1e-9 * (1.0 + a));
        }

        #[test]
        fn scale_round_trip(ctx in prop::collection::vec(-5.0f64..5.0, 1..10).prop_map(|v| [v.clone(), v].concat()), alpha in 1.0f64..50.0) {
            let target = vec![1.0, -2.0, 3.0];
            for r in [Regime::Large, Regime::Small] {
                let t = scale_protocol(&ctx, &target, alpha, r).unwrap();
                let h = ctx.len() / 2;
                let restored: Vec<f64> = t.context.iter().enumerate().map(|(i, x)| {
                    let shrunk = (r == Regime::Large && i < h) || (r == Regime::Small && i >= h);
                    if shrunk { x * alpha } else { *x }
                }).collect();
                for (a, b) in restored.iter().zip(&ctx) {
                    prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
                }
                let model: Vec<f64> = target.iter().map(|y| y / t.gamma).collect();
                let back = t.renormalize(&model);
                let (mse, _) = point_errors(&target, &back).unwrap();
                prop_assert!(mse < 1e-24);
            }
        }

        #[test]
        fn frequency_loss_self_zero(y in prop::collection::vec(-5.0f64..5.0, 8..64), f in 0.0f64..1.0) {
            prop_assert_eq!(frequency_loss(&y, &y, f).unwrap(), 0.0);
        }

        #[test]
        fn geomean_permutation_and_composition(r1 in prop::collection::vec(0.1f64..10.0, 1..8), r2 in prop::collection::vec(0.1f64..10.0, 8)) {
            let base: BTreeMap<String, f64> = (0..r1.len()).map(|i| (format!("d{i}"), 1.0 + i as f64)).collect();
            let s1: BTreeMap<String, f64> = base.iter().zip(&r1).map(|((k, b), r)| (k.clone(), b * r)).collect();
            let s2: BTreeMap<String, f64> = s1.iter().zip(&r2).map(|((k, b), r)| (k.clone(), b * r)).collect();
            let renamed: BTreeMap<String, f64> = s1.iter().map(|(k, v)| (format!("z{k}"), *v)).collect();
            let base_renamed: BTreeMap<String, f64> = base.iter().map(|(k, v)| (format!("z{k}"), *v)).collect();
            let g1 = relative_geomean(&s1, &base).unwrap();
            let g2 = relative_geomean(&s2, &s1).unwrap();
            prop_assert!((relative_geomean(&renamed, &base_renamed).unwrap() - g1).abs() < 1e-12 * g1);
            prop_assert!((relative_geomean(&s2, &base).unwrap() - g1 * g2).abs() < 1e-9 * g1 * g2);
        }
    }
}
