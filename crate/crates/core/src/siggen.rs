//! Seeded generators for synthetic contexts.
//!
//! Every generator is a pure function of its parameters and seed. Randomized
//! generators draw from [`Rng`] streams so that equal inputs give bit-identical
//! outputs.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, ensure_finite, Error, Result};
use crate::rng::Rng;
use crate::series::Series;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    /// Cycles per unit time.
    pub freq: f64,
    pub amp: f64,
    /// Radians.
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicSpec {
    pub components: Vec<Harmonic>,
    pub noise_std: f64,
    pub length: usize,
    pub dt: f64,
}

impl HarmonicSpec {
    pub fn validate(&self) -> Result<()> {
        ensure(self.length >= 1, || "length must be at least 1".into())?;
        ensure_finite("noise_std", self.noise_std)?;
        ensure(self.noise_std >= 0.0, || "noise_std must be nonnegative".into())?;
        ensure(self.dt.is_finite() && self.dt > 0.0, || "dt must be positive".into())?;
        ensure(!self.components.is_empty() || self.noise_std > 0.0, || {
            "harmonic spec needs a component or positive noise".into()
        })?;
        for c in &self.components {
            ensure_finite("frequency", c.freq)?;
            ensure_finite("amplitude", c.amp)?;
            ensure_finite("phase", c.phase)?;
        }
        Ok(())
    }
}

/// Sum of sinusoids plus i.i.d. Gaussian noise.
pub fn harmonic(spec: &HarmonicSpec, seed: u64) -> Result<Series> {
    spec.validate()?;
    let mut rng = Rng::new(seed);
    let values = (0..spec.length)
        .map(|t| {
            let time = t as f64 * spec.dt;
            let clean: f64 = spec
                .components
                .iter()
                .map(|c| c.amp * (2.0 * PI * c.freq * time + c.phase).sin())
                .sum();
            if spec.noise_std > 0.0 {
                clean + spec.noise_std * rng.gaussian()
            } else {
                clean
            }
        })
        .collect();
    Series::new(values, spec.dt, "harmonic")
}

/// Binary walk that stays `steps_per_branch` samples on each branch, starting at 1.
pub fn periodic_walk(steps_per_branch: usize, length: usize) -> Result<Series> {
    ensure(steps_per_branch >= 1 && length >= 1, || {
        "periodic_walk needs positive steps and length".into()
    })?;
    let values = (0..length)
        .map(|t| if (t / steps_per_branch) % 2 == 0 { 1.0 } else { 0.0 })
        .collect();
    Series::new(values, 1.0, "periodic_walk")
}

/// Flips each binary sample independently with probability `q ∈ [0, 1/2]`.
///
/// `q = 0` leaves the walk deterministic and `q = 1/2` makes every sample a
/// fair coin. An "XOR with Bern(1-p)" convention maps to `q = 1 - p`.
pub fn xor_diffuse(s: &Series, q: f64, seed: u64) -> Result<Series> {
    ensure((0.0..=0.5).contains(&q), || format!("flip probability {q} outside [0, 1/2]"))?;
    if let Some(i) = s.values().iter().position(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::validation(format!(
            "xor_diffuse needs a binary series; sample {i} is {}",
            s.values()[i]
        )));
    }
    if q == 0.0 {
        return Ok(s.clone());
    }
    let mut rng = Rng::new(seed);
    let values = s
        .values()
        .iter()
        .map(|&v| if rng.bernoulli(q) { 1.0 - v } else { v })
        .collect();
    s.map_values(values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvelopeKind {
    /// Gaussian window centred on the midpoint.
    Bidirectional,
    /// Exponentially decaying window.
    Unidirectional,
}

/// Sine carrier (cycles per sample) modulated by a positive envelope.
pub fn envelope_sine(kind: EnvelopeKind, length: usize, carrier_freq: f64) -> Result<Series> {
    ensure(length >= 4, || "envelope_sine needs length >= 4".into())?;
    ensure_finite("carrier_freq", carrier_freq)?;
    let l = length as f64;
    let values = (0..length)
        .map(|t| {
            let t = t as f64;
            let window = match kind {
                EnvelopeKind::Bidirectional => {
                    let c = (l - 1.0) / 2.0;
                    let w = l / 6.0;
                    (-0.5 * ((t - c) / w).powi(2)).exp()
                }
                EnvelopeKind::Unidirectional => (-3.0 * t / l).exp(),
            };
            (2.0 * PI * carrier_freq * t).sin() * window
        })
        .collect();
    Series::new(values, 1.0, "envelope_sine")
}

/// Alternates `t·sin(t·dt)` on even segments with `sin(t·dt)` on odd ones.
pub fn regime_partition(length: usize, segment_len: usize, dt: f64) -> Result<Series> {
    ensure(length >= 1 && segment_len >= 1, || {
        "regime_partition needs positive length and segment_len".into()
    })?;
    let values = (0..length)
        .map(|t| {
            let base = (t as f64 * dt).sin();
            if (t / segment_len) % 2 == 0 {
                t as f64 * base
            } else {
                base
            }
        })
        .collect();
    Series::new(values, dt, "regime_partition")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutlierMode {
    /// Exactly `param` distinct positions.
    FixedCount,
    /// Each position independently with probability `param`.
    Bernoulli,
}

/// Adds `magnitude` at randomly chosen positions; returns the sorted positions.
pub fn inject_outliers(
    s: &Series,
    mode: OutlierMode,
    magnitude: f64,
    param: f64,
    seed: u64,
) -> Result<(Series, Vec<usize>)> {
    ensure_finite("magnitude", magnitude)?;
    let n = s.len();
    let mut rng = Rng::new(seed);
    let positions: Vec<usize> = match mode {
        OutlierMode::FixedCount => {
            ensure(param >= 0.0 && param.fract() == 0.0 && param <= n as f64, || {
                format!("fixed_count needs an integer count in [0, {n}], got {param}")
            })?;
            let count = param as usize;
            // Partial Fisher–Yates over the index range.
            let mut idx: Vec<usize> = (0..n).collect();
            for i in 0..count {
                let j = i + rng.below((n - i) as u64) as usize;
                idx.swap(i, j);
            }
            let mut chosen = idx[..count].to_vec();
            chosen.sort_unstable();
            chosen
        }
        OutlierMode::Bernoulli => {
            ensure((0.0..=1.0).contains(&param), || {
                format!("bernoulli probability {param} outside [0, 1]")
            })?;
            (0..n).filter(|_| rng.bernoulli(param)).collect()
        }
    };
    let mut values = s.values().to_vec();
    for &p in &positions {
        values[p] += magnitude;
    }
    Ok((s.map_values(values)?, positions))
}

fn segment_ranges(len: usize, boundaries: &[usize], count: usize) -> Result<Vec<(usize, usize)>> {
    let mut prev = 0;
    for &b in boundaries {
        ensure(b > prev && b < len, || {
            format!("boundaries must be strictly ascending interior indices, got {boundaries:?}")
        })?;
        prev = b;
    }
    ensure(count == boundaries.len() + 1, || {
        format!(
            "{} boundaries define {} segments but {count} values were given",
            boundaries.len(),
            boundaries.len() + 1
        )
    })?;
    let mut starts = vec![0];
    starts.extend_from_slice(boundaries);
    let mut ends = boundaries.to_vec();
    ends.push(len);
    Ok(starts.into_iter().zip(ends).collect())
}

/// Multiplies each segment by its factor. `boundaries` are the interior cut
/// points, so `k` boundaries define `k + 1` segments.
pub fn scale_segments(s: &Series, boundaries: &[usize], factors: &[f64]) -> Result<Series> {
    for &f in factors {
        ensure_finite("factor", f)?;
    }
    let mut values = s.values().to_vec();
    for ((a, b), f) in segment_ranges(s.len(), boundaries, factors.len())?.into_iter().zip(factors) {
        values[a..b].iter_mut().for_each(|v| *v *= f);
    }
    s.map_values(values)
}

/// Shifts each segment by its offset. Boundaries as in [`scale_segments`].
pub fn offset_segments(s: &Series, boundaries: &[usize], offsets: &[f64]) -> Result<Series> {
    for &o in offsets {
        ensure_finite("offset", o)?;
    }
    let mut values = s.values().to_vec();
    for ((a, b), o) in segment_ranges(s.len(), boundaries, offsets.len())?.into_iter().zip(offsets) {
        values[a..b].iter_mut().for_each(|v| *v += o);
    }
    s.map_values(values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorenzParams {
    pub sigma: f64,
    pub rho: f64,
    pub beta_l: f64,
    pub x0: [f64; 3],
    pub dt: f64,
    pub steps: usize,
    /// Which coordinate to return (0 = x, 1 = y, 2 = z).
    pub component: usize,
}

impl Default for LorenzParams {
    fn default() -> Self {
        LorenzParams {
            sigma: 10.0,
            rho: 28.0,
            beta_l: 8.0 / 3.0,
            x0: [1.0, 1.0, 1.0],
            dt: 0.01,
            steps: 5000,
            component: 0,
        }
    }
}

fn lorenz_rhs(p: &LorenzParams, s: [f64; 3]) -> [f64; 3] {
    [
        p.sigma * (s[1] - s[0]),
        s[0] * (p.rho - s[2]) - s[1],
        s[0] * s[1] - p.beta_l * s[2],
    ]
}

fn axpy(s: [f64; 3], h: f64, k: [f64; 3]) -> [f64; 3] {
    [s[0] + h * k[0], s[1] + h * k[1], s[2] + h * k[2]]
}

/// Classical RK4 trajectory, including the initial state (`steps + 1` states).
pub fn lorenz_trajectory(p: &LorenzParams) -> Result<Vec<[f64; 3]>> {
    ensure(p.dt.is_finite() && p.dt > 0.0, || "dt must be positive".into())?;
    ensure(p.steps >= 1, || "steps must be at least 1".into())?;
    ensure(p.component < 3, || format!("component {} not in 0..3", p.component))?;
    for v in [p.sigma, p.rho, p.beta_l, p.x0[0], p.x0[1], p.x0[2]] {
        ensure_finite("lorenz parameter", v)?;
    }
    let h = p.dt;
    let mut state = p.x0;
    let mut out = Vec::with_capacity(p.steps + 1);
    out.push(state);
    for step in 1..=p.steps {
        let k1 = lorenz_rhs(p, state);
        let k2 = lorenz_rhs(p, axpy(state, h / 2.0, k1));
        let k3 = lorenz_rhs(p, axpy(state, h / 2.0, k2));
        let k4 = lorenz_rhs(p, axpy(state, h, k3));
        for i in 0..3 {
            state[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::Integration { step });
        }
        out.push(state);
    }
    Ok(out)
}

/// One coordinate of the Lorenz trajectory as a series with step `dt`.
pub fn lorenz(p: &LorenzParams) -> Result<Series> {
    let traj = lorenz_trajectory(p)?;
    let values = traj.iter().map(|s| s[p.component]).collect();
    Series::new(values, p.dt, "lorenz")
}

/// Places copies of `motif` at `positions` over a constant background.
pub fn motif_repeat(
    motif: &Series,
    gap_value: f64,
    total_length: usize,
    positions: &[usize],
) -> Result<Series> {
    ensure_finite("gap_value", gap_value)?;
    ensure(total_length >= 1, || "total_length must be positive".into())?;
    let w = motif.len();
    let mut sorted = positions.to_vec();
    sorted.sort_unstable();
    for (i, &p) in sorted.iter().enumerate() {
        ensure(p + w <= total_length, || {
            format!("motif at {p} (length {w}) exceeds total length {total_length}")
        })?;
        if i > 0 {
            ensure(sorted[i - 1] + w <= p, || {
                format!("motif placements at {} and {p} overlap", sorted[i - 1])
            })?;
        }
    }
    let mut values = vec![gap_value; total_length];
    for &p in &sorted {
        values[p..p + w].copy_from_slice(motif.values());
    }
    Series::new(values, motif.dt(), "motif_repeat")
}

/// Concatenates series that share a sampling step.
pub fn concat_segments(segments: &[Series]) -> Result<Series> {
    let first = segments
        .first()
        .ok_or_else(|| Error::validation("concat_segments needs at least one segment"))?;
    for (i, s) in segments.iter().enumerate() {
        ensure(s.dt() == first.dt(), || {
            format!("segment {i} has dt {} but segment 0 has dt {}", s.dt(), first.dt())
        })?;
    }
    let values = segments.iter().flat_map(|s| s.values().iter().copied()).collect();
    Series::new(values, first.dt(), "concat")
}
