//! Simplicity-bias experiments: bit-budget futures, score binning, Occam
//! pairs and win rates.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::modelio::{ContextRecord, LogProbDump};
use crate::par::{map_cells, Exec};
use crate::rng::{cell_seed, derive_seed, Rng};
use crate::series::{mean, std_pop};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Linear,
    Sinusoid,
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Family::Linear),
            "sinusoid" => Ok(Family::Sinusoid),
            other => Err(Error::validation(format!("unknown base family '{other}'"))),
        }
    }
}

/// Parameters of a base mechanism, evaluated at integer times `t = 0, 1, ...`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum BaseParams {
    /// `a·t + b`.
    Linear { a: f64, b: f64 },
    /// `amp·sin(2π·freq·t + phase)`.
    Sinusoid { amp: f64, freq: f64, phase: f64 },
}

impl BaseParams {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            BaseParams::Linear { a, b } => a * t + b,
            BaseParams::Sinusoid { amp, freq, phase } => amp * (2.0 * PI * freq * t + phase).sin(),
        }
    }

    /// Draws parameters for a family; sinusoid periods span 8 samples to `context_len / 2`.
    pub fn sample(family: Family, context_len: usize, seed: u64) -> Self {
        let mut rng = Rng::new(seed);
        match family {
            Family::Linear => BaseParams::Linear {
                a: rng.uniform() * 2.0 - 1.0,
                b: rng.gaussian(),
            },
            Family::Sinusoid => {
                let lo = (2.0 / context_len.max(16) as f64).ln();
                let hi = (1.0f64 / 8.0).ln();
                BaseParams::Sinusoid {
                    amp: 0.5 + 1.5 * rng.uniform(),
                    freq: (lo + (hi - lo) * rng.uniform()).exp(),
                    phase: 2.0 * PI * rng.uniform(),
                }
            }
        }
    }
}

/// Context `t = 0..L` and its continuation `t = L..L+T`.
pub fn gen_base(params: &BaseParams, context_len: usize, horizon: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    ensure(context_len >= 1 && horizon >= 1, || "context length and horizon must be positive".into())?;
    let ctx = (0..context_len).map(|t| params.eval(t as f64)).collect();
    let fut = (context_len..context_len + horizon).map(|t| params.eval(t as f64)).collect();
    Ok((ctx, fut))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityBudget {
    pub m: usize,
    pub k_f: u32,
    pub b_a: u32,
    pub b_phi: u32,
    pub k_base: u32,
    pub a_min: f64,
    pub a_max: f64,
    /// Added variance as a fraction of the simple future's variance.
    pub energy_fraction: f64,
}

impl Default for ComplexityBudget {
    fn default() -> Self {
        ComplexityBudget { m: 1, k_f: 3, b_a: 3, b_phi: 2, k_base: 0, a_min: 0.5, a_max: 2.0, energy_fraction: 0.25 }
    }
}

impl ComplexityBudget {
    pub fn bits_per_component(&self) -> u32 {
        self.k_f + self.b_a + self.b_phi
    }

    /// `K_base + M·(k_f + b_A + b_φ)`.
    pub fn k_bits(&self) -> u32 {
        self.k_base + self.m as u32 * self.bits_per_component()
    }

    fn validate(&self) -> Result<()> {
        ensure(self.a_min <= self.a_max && self.a_min >= 0.0, || "amplitude range must satisfy 0 <= A_min <= A_max".into())?;
        ensure(self.k_f <= 20 && self.b_a <= 20 && self.b_phi <= 20, || "bit allocations above 20 are not supported".into())?;
        ensure(self.energy_fraction >= 0.0 && self.energy_fraction.is_finite(), || "energy fraction must be nonnegative".into())
    }
}

/// `2^k_f` log-spaced frequencies strictly inside `(1/T, 1/4)` cycles per sample.
pub fn frequency_grid(k_f: u32, horizon: usize) -> Vec<f64> {
    let n = 1usize << k_f;
    let (a, b) = ((1.0 / horizon as f64).ln(), 0.25f64.ln());
    let (lo, hi) = (a.min(b), a.max(b));
    (0..n).map(|i| (lo + (hi - lo) * (i + 1) as f64 / (n + 1) as f64).exp()).collect()
}

fn amplitude_level(budget: &ComplexityBudget, j: u64) -> f64 {
    let levels = 1u64 << budget.b_a;
    if levels == 1 {
        0.5 * (budget.a_min + budget.a_max)
    } else {
        budget.a_min + (budget.a_max - budget.a_min) * j as f64 / (levels - 1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub freq: f64,
    pub amp: f64,
    pub phase: f64,
}

fn draw_components(budget: &ComplexityBudget, horizon: usize, seed: u64) -> Vec<Component> {
    let grid = frequency_grid(budget.k_f, horizon);
    let mut rng = Rng::new(seed);
    (0..budget.m)
        .map(|_| Component {
            freq: grid[rng.below(grid.len() as u64) as usize],
            amp: amplitude_level(budget, rng.below(1 << budget.b_a)),
            phase: 2.0 * PI * rng.below(1 << budget.b_phi) as f64 / (1u64 << budget.b_phi) as f64,
        })
        .collect()
}

fn components_at(comps: &[Component], t: f64) -> f64 {
    comps.iter().map(|c| c.amp * (2.0 * PI * c.freq * t + c.phase).sin()).sum()
}

/// Added structure over the horizon (`t = 1..=T`) rescaled to the matched energy.
struct AddedTerm {
    comps: Vec<Component>,
    scale: f64,
}

impl AddedTerm {
    fn new(simple: &[f64], budget: &ComplexityBudget, seed: u64) -> Self {
        let comps = draw_components(budget, simple.len(), seed);
        let raw: Vec<f64> = (1..=simple.len()).map(|t| components_at(&comps, t as f64)).collect();
        let raw_var = std_pop(&raw).powi(2);
        let target = budget.energy_fraction * std_pop(simple).powi(2);
        let scale = if raw_var > 0.0 && target > 0.0 { (target / raw_var).sqrt() } else { 1.0 };
        AddedTerm { comps, scale }
    }

    fn at(&self, t: f64) -> f64 {
        self.scale * components_at(&self.comps, t)
    }
}

fn ramp(i: usize, ramp_len: usize) -> f64 {
    if ramp_len == 0 {
        1.0
    } else {
        (i as f64 / ramp_len as f64).min(1.0)
    }
}

fn apply_components(simple: &[f64], term: &AddedTerm, ramp_len: usize, gain: f64) -> Vec<f64> {
    simple
        .iter()
        .enumerate()
        .map(|(i, y)| y + gain * ramp(i, ramp_len) * term.at((i + 1) as f64))
        .collect()
}

/// Adds `M` quantized sinusoids under a linear ramp from 0; returns the
/// complex future and its bit budget.
pub fn add_components(simple: &[f64], budget: &ComplexityBudget, ramp_len: usize, seed: u64) -> Result<(Vec<f64>, u32)> {
    budget.validate()?;
    ensure(ramp_len < simple.len(), || format!("ramp length {ramp_len} must be below the horizon {}", simple.len()))?;
    if budget.m == 0 {
        return Ok((simple.to_vec(), budget.k_base));
    }
    let term = AddedTerm::new(simple, budget, seed);
    Ok((apply_components(simple, &term, ramp_len, 1.0), budget.k_bits()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Standardized {
    pub simple: Vec<f64>,
    pub complex: Vec<f64>,
    pub mu: f64,
    pub sigma: f64,
}

/// Maps both futures by `(y - μ_S)/σ_S` from the simple future's mean and
/// population standard deviation.
pub fn shared_standardize(simple: &[f64], complex: &[f64]) -> Result<Standardized> {
    ensure(!simple.is_empty() && simple.len() == complex.len(), || "futures must be non-empty and of equal length".into())?;
    let mu = mean(simple);
    let sigma = std_pop(simple);
    ensure(sigma > 0.0 && sigma.is_finite(), || "simple future is constant; shared scale undefined".into())?;
    let f = |xs: &[f64]| xs.iter().map(|y| (y - mu) / sigma).collect();
    Ok(Standardized { simple: f(simple), complex: f(complex), mu, sigma })
}

/// Mean per-step log-probability.
pub fn avg_logprob(dump: &LogProbDump) -> Result<f64> {
    ensure(!dump.logprobs.is_empty(), || format!("log-prob dump {} is empty", dump.id))?;
    Ok(mean(&dump.logprobs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStat {
    /// Mean K within the bin.
    pub center: f64,
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

/// Bins `(K, score)` samples into `bins` K-quantile bins. Samples with equal
/// K always share a bin, so fewer bins may come back.
pub fn quantile_bins(samples: &[(f64, f64)], bins: usize) -> Result<Vec<BinStat>> {
    ensure(bins >= 1, || "need at least one bin".into())?;
    ensure(samples.len() >= bins, || format!("{} samples cannot fill {bins} bins", samples.len()))?;
    ensure(samples.iter().all(|(k, s)| k.is_finite() && s.is_finite()), || "samples must be finite".into())?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = sorted.len();
    let mut assign = vec![0usize; n];
    for p in 0..n {
        assign[p] = if p > 0 && sorted[p].0 == sorted[p - 1].0 { assign[p - 1] } else { p * bins / n };
    }
    let mut out = Vec::new();
    let mut start = 0;
    while start < n {
        let mut end = start;
        while end < n && assign[end] == assign[start] {
            end += 1;
        }
        let ks: Vec<f64> = sorted[start..end].iter().map(|x| x.0).collect();
        let ss: Vec<f64> = sorted[start..end].iter().map(|x| x.1).collect();
        let m = mean(&ss);
        let nb = ss.len();
        let sd = if nb > 1 {
            (ss.iter().map(|s| (s - m).powi(2)).sum::<f64>() / (nb - 1) as f64).sqrt()
        } else {
            0.0
        };
        let half = 1.96 * sd / (nb as f64).sqrt();
        out.push(BinStat { center: mean(&ks), mean: m, lo: m - half, hi: m + half, n: nb });
        start = end;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WinRate {
    pub w: f64,
    pub ties: usize,
    pub n: usize,
}

pub const DEFAULT_TIE_EPS: f64 = 1e-6;

/// Win for simple if `Δℓ > ε`, loss if `Δℓ < -ε`, half otherwise.
pub fn win_rate(deltas: &[f64], tie_eps: f64) -> Result<WinRate> {
    ensure(!deltas.is_empty(), || "win rate of an empty set".into())?;
    ensure(tie_eps >= 0.0, || "tie tolerance must be nonnegative".into())?;
    let mut wins = 0.0;
    let mut ties = 0;
    for &d in deltas {
        if d > tie_eps {
            wins += 1.0;
        } else if d >= -tie_eps {
            wins += 0.5;
            ties += 1;
        }
    }
    Ok(WinRate { w: wins / deltas.len() as f64, ties, n: deltas.len() })
}

/// Wilson score interval for `wins/n`.
pub fn wilson(wins: f64, n: usize, z: f64) -> Result<(f64, f64)> {
    ensure(n >= 1, || "Wilson interval needs n >= 1".into())?;
    let nf = n as f64;
    ensure((0.0..=nf).contains(&wins), || format!("wins {wins} outside [0, {n}]"))?;
    let p = wins / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    let lo = if wins == 0.0 { 0.0 } else { (center - half).clamp(0.0, p) };
    let hi = if wins == nf { 1.0 } else { (center + half).clamp(p, 1.0) };
    Ok((lo, hi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinRatePoint {
    pub delta_k: u32,
    pub n: usize,
    pub w: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
    pub ties: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    /// Right end of the ΔK grid.
    pub dk_max: f64,
    /// Width of the right-end anchor window as a fraction of `dk_max`.
    pub anchor_fraction: f64,
    /// Noise standard deviation at ΔK = 0, relative to the simple future's std.
    pub noise_max: f64,
    pub ramp_max: usize,
    pub preview_max: f64,
    pub gain_max: f64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig { dk_max: 64.0, anchor_fraction: 0.2, noise_max: 0.2, ramp_max: 8, preview_max: 0.5, gain_max: 1.5 }
    }
}

impl SchedulerConfig {
    /// Largest change of the gain per unit ΔK (smoothstep slope is at most 1.5).
    pub fn max_gain_step(&self) -> f64 {
        (self.gain_max - 1.0) * 1.5 / (self.anchor_fraction * self.dk_max)
    }

    fn validate(&self) -> Result<()> {
        ensure(self.dk_max > 0.0, || "dk_max must be positive".into())?;
        ensure(self.anchor_fraction > 0.0 && self.anchor_fraction <= 1.0, || "anchor fraction must lie in (0, 1]".into())?;
        ensure(self.noise_max >= 0.0 && self.preview_max >= 0.0, || "noise and preview levels must be nonnegative".into())?;
        ensure(self.gain_max >= 1.0, || "gain_max must be at least 1".into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Knobs {
    pub noise_std: f64,
    pub ramp_len: usize,
    pub preview_weight: f64,
    pub gain: f64,
    /// ΔK = 0: no components and one noise draw shared by both futures.
    pub shared_noise: bool,
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

/// Nuisance knobs as a function of ΔK: linear decay, switched off smoothly
/// across the right-end anchor window.
pub fn occam_scheduler(delta_k: f64, cfg: &SchedulerConfig) -> Knobs {
    let s = (delta_k / cfg.dk_max).clamp(0.0, 1.0);
    let a0 = 1.0 - cfg.anchor_fraction;
    let w = smoothstep((s - a0) / cfg.anchor_fraction);
    let fade = (1.0 - s) * (1.0 - w);
    Knobs {
        noise_std: cfg.noise_max * (1.0 - s),
        ramp_len: (cfg.ramp_max as f64 * fade).round() as usize,
        preview_weight: cfg.preview_max * fade,
        gain: 1.0 + (cfg.gain_max - 1.0) * w,
        shared_noise: delta_k <= 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccamConfig {
    pub family: Family,
    pub context_len: usize,
    pub horizon: usize,
    pub kf_max: u32,
    pub ba_max: u32,
    pub bphi_max: u32,
    pub m_max: usize,
    pub a_min: f64,
    pub a_max: f64,
    pub energy_fraction: f64,
    pub scheduler: SchedulerConfig,
    pub exec: Exec,
}

impl Default for OccamConfig {
    fn default() -> Self {
        OccamConfig {
            family: Family::Sinusoid,
            context_len: 64,
            horizon: 32,
            kf_max: 6,
            ba_max: 4,
            bphi_max: 4,
            m_max: 8,
            a_min: 0.5,
            a_max: 2.0,
            energy_fraction: 0.25,
            scheduler: SchedulerConfig::default(),
            exec: Exec::Parallel,
        }
    }
}

pub const DEFAULT_DK_GRID: [u32; 9] = [0, 2, 4, 8, 16, 24, 32, 48, 64];

impl OccamConfig {
    fn max_cost(&self) -> u32 {
        self.kf_max + self.ba_max + self.bphi_max
    }

    /// Budget whose `M·(k_f + b_A + b_φ)` lands within one component cost of `target`.
    pub fn budget_for(&self, target: u32) -> Result<ComplexityBudget> {
        let base = ComplexityBudget {
            m: 0,
            k_f: 0,
            b_a: 0,
            b_phi: 0,
            k_base: 0,
            a_min: self.a_min,
            a_max: self.a_max,
            energy_fraction: self.energy_fraction,
        };
        if target == 0 {
            return Ok(base);
        }
        let cmax = self.max_cost();
        ensure(cmax >= 1, || "bit caps leave no room for components".into())?;
        let m = target.div_ceil(cmax) as usize;
        if m > self.m_max {
            return Err(Error::Config(format!(
                "ΔK = {target} bits needs {m} components but at most {} of {cmax} bits each are allowed",
                self.m_max
            )));
        }
        let c = ((target as f64 / m as f64).round() as u32).clamp(1, cmax);
        let k_f = c.min(self.kf_max);
        let b_a = (c - k_f).min(self.ba_max);
        let b_phi = c - k_f - b_a;
        let budget = ComplexityBudget { m, k_f, b_a, b_phi, ..base };
        let got = budget.k_bits();
        if got.abs_diff(target) > c {
            return Err(Error::Config(format!("ΔK = {target} bits is unreachable; closest budget gives {got}")));
        }
        Ok(budget)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccamPair {
    pub id: String,
    /// Standardized with the shared scaling.
    pub context: Vec<f64>,
    pub simple: Vec<f64>,
    pub complex: Vec<f64>,
    /// Noise-free simple continuation, standardized.
    pub mechanism: Vec<f64>,
    pub target_delta_k: u32,
    pub delta_k: u32,
    pub budget: ComplexityBudget,
    pub knobs: Knobs,
    pub mu_s: f64,
    pub sigma_s: f64,
    pub base: BaseParams,
    pub seed: u64,
}

fn noise(rng: &mut Rng, n: usize, std: f64) -> Vec<f64> {
    (0..n).map(|_| std * rng.gaussian()).collect()
}

fn make_pair(cfg: &OccamConfig, target: u32, index: usize, master_seed: u64) -> Result<OccamPair> {
    let budget = cfg.budget_for(target)?;
    let knobs = occam_scheduler(target as f64, &cfg.scheduler);
    // The base mechanism depends on the pair index only, so every ΔK sees the same contexts.
    let base_seed = cell_seed(master_seed, &[0xBA5E, index as u64]);
    let seed = cell_seed(master_seed, &[target as u64, index as u64]);
    let base = BaseParams::sample(cfg.family, cfg.context_len, base_seed);
    let (mut context, mech) = gen_base(&base, cfg.context_len, cfg.horizon)?;
    let mech_std = std_pop(&mech);
    let noise_std = knobs.noise_std * if mech_std > 0.0 { mech_std } else { 1.0 };
    let mut rng = Rng::new(derive_seed(seed, 1));
    let noise_s = noise(&mut rng, cfg.horizon, noise_std);
    let simple: Vec<f64> = mech.iter().zip(&noise_s).map(|(m, e)| m + e).collect();
    let complex = if knobs.shared_noise || budget.m == 0 {
        simple.clone()
    } else {
        ensure(knobs.ramp_len < cfg.horizon, || "ramp length exceeds the horizon".into())?;
        let term = AddedTerm::new(&mech, &budget, derive_seed(seed, 2));
        let noise_c = noise(&mut rng, cfg.horizon, noise_std);
        let with = apply_components(&mech, &term, knobs.ramp_len, knobs.gain);
        if knobs.preview_weight > 0.0 {
            // Faint backward continuation of the extra structure into the context.
            let l = cfg.context_len as f64;
            for (t, x) in context.iter_mut().enumerate() {
                *x += knobs.preview_weight * knobs.gain * term.at(t as f64 - l + 1.0);
            }
        }
        with.iter().zip(&noise_c).map(|(y, e)| y + e).collect()
    };
    let st = shared_standardize(&simple, &complex)?;
    let z = |xs: &[f64]| xs.iter().map(|y| (y - st.mu) / st.sigma).collect::<Vec<f64>>();
    Ok(OccamPair {
        id: format!("occam-dk{target}-i{index}"),
        context: z(&context),
        mechanism: z(&mech),
        simple: st.simple,
        complex: st.complex,
        target_delta_k: target,
        delta_k: budget.k_bits(),
        budget,
        knobs,
        mu_s: st.mu,
        sigma_s: st.sigma,
        base,
        seed,
    })
}

/// `n_per_point` pairs for every ΔK target. Pair `i` shares its base
/// mechanism across targets (common random numbers).
pub fn occam_pairs(dk_grid: &[u32], n_per_point: usize, cfg: &OccamConfig, master_seed: u64) -> Result<Vec<OccamPair>> {
    ensure(n_per_point >= 1, || "n_per_point must be at least 1".into())?;
    ensure(cfg.horizon >= 2 && cfg.context_len >= 1, || "horizon must be at least 2".into())?;
    cfg.scheduler.validate()?;
    for &t in dk_grid {
        cfg.budget_for(t)?;
    }
    let cells: Vec<(u32, usize)> = dk_grid.iter().flat_map(|&t| (0..n_per_point).map(move |i| (t, i))).collect();
    map_cells(cfg.exec, &cells, |&(t, i)| make_pair(cfg, t, i, master_seed)).into_iter().collect()
}

/// Mean Gaussian log-density of each future around the standardized mechanism.
pub fn reference_score(pair: &OccamPair, sigma_ref: f64) -> Result<(f64, f64)> {
    ensure(sigma_ref > 0.0 && sigma_ref.is_finite(), || "sigma_ref must be positive".into())?;
    let c = -0.5 * (2.0 * PI * sigma_ref * sigma_ref).ln();
    let score = |xs: &[f64]| {
        let sq: f64 = xs.iter().zip(&pair.mechanism).map(|(x, m)| (x - m).powi(2)).sum();
        c - sq / (2.0 * sigma_ref * sigma_ref * xs.len() as f64)
    };
    Ok((score(&pair.simple), score(&pair.complex)))
}

/// Win rates per ΔK target from `(pair, Δℓ)` results.
pub fn win_rate_curve(pairs: &[OccamPair], deltas: &[f64], tie_eps: f64) -> Result<Vec<WinRatePoint>> {
    ensure(pairs.len() == deltas.len(), || "one Δℓ per pair is required".into())?;
    let mut groups: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for (p, d) in pairs.iter().zip(deltas) {
        groups.entry(p.target_delta_k).or_default().push(*d);
    }
    groups
        .into_iter()
        .map(|(dk, ds)| {
            let wr = win_rate(&ds, tie_eps)?;
            let (lo, hi) = wilson(wr.w * wr.n as f64, wr.n, 1.96)?;
            Ok(WinRatePoint { delta_k: dk, n: wr.n, w: wr.w, wilson_lo: lo, wilson_hi: hi, ties: wr.ties })
        })
        .collect()
}

/// Δℓ for every pair from log-prob dumps with ids `<pair>/simple` and `<pair>/complex`.
pub fn deltas_from_dumps(pairs: &[OccamPair], dumps: &[LogProbDump]) -> Result<Vec<f64>> {
    let by_id: HashMap<&str, &LogProbDump> = dumps.iter().map(|d| (d.id.as_str(), d)).collect();
    let mut missing = Vec::new();
    let mut out = Vec::with_capacity(pairs.len());
    for p in pairs {
        let s = format!("{}/simple", p.id);
        let c = format!("{}/complex", p.id);
        match (by_id.get(s.as_str()), by_id.get(c.as_str())) {
            (Some(a), Some(b)) => out.push(avg_logprob(a)? - avg_logprob(b)?),
            (a, b) => {
                if a.is_none() {
                    missing.push(s);
                }
                if b.is_none() {
                    missing.push(c);
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::Join { missing });
    }
    Ok(out)
}

/// One context record per pair plus two future records (`<id>/simple`, `<id>/complex`).
pub fn occam_records(pairs: &[OccamPair]) -> (Vec<ContextRecord>, Vec<ContextRecord>) {
    let mut ctx = Vec::with_capacity(pairs.len());
    let mut fut = Vec::with_capacity(2 * pairs.len());
    for p in pairs {
        let tagged = |r: ContextRecord| {
            r.tag("experiment", "occam")
                .tag("delta_K", p.delta_k)
                .tag("target_delta_K", p.target_delta_k)
                .tag("mu_s", p.mu_s)
                .tag("sigma_s", p.sigma_s)
                .tag("seed", p.seed)
        };
        ctx.push(tagged(ContextRecord::new(p.id.clone(), p.context.clone(), p.simple.len())));
        for (branch, values) in [("simple", &p.simple), ("complex", &p.complex)] {
            fut.push(
                tagged(ContextRecord::new(format!("{}/{branch}", p.id), values.clone(), 0))
                    .tag("pair", &p.id)
                    .tag("branch", branch),
            );
        }
    }
    (ctx, fut)
}
