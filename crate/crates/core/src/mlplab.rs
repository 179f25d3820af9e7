//! Random two-layer ReLU embeddings of band-limited patches and the rank
//! statistics of their outputs.
//!
//! Patches are columns of a `k x n` matrix synthesized in the orthonormal real
//! DFT basis (see [`crate::spectral`]). Columns drawn from one shared band span
//! at most `|band|` dimensions; columns drawn from disjoint bands are exactly
//! orthonormal. [`rank_sweep`] runs the three sweep experiments over grids of
//! independent (sweep value, trial) cells.

use std::f64::consts::PI;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::linalg;
use crate::par::{map_cells, Exec};
use crate::rng::{cell_seed, derive_seed, Rng};
use crate::spectral;

/// `1/√(2π)`, the mean of `ReLU(Z)` for standard normal `Z`.
pub const RELU_GAUSSIAN_MEAN: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BiasMode {
    /// `b = -W2·1_m / √(2π)`.
    Centered,
    Zero,
}

#[derive(Debug, Clone)]
pub struct MlpEmbedding {
    pub w1: Mat<f64>,
    pub w2: Mat<f64>,
    pub b: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub bias_mode: BiasMode,
}

impl MlpEmbedding {
    pub fn k(&self) -> usize {
        self.w1.ncols()
    }
    pub fn m(&self) -> usize {
        self.w1.nrows()
    }
    pub fn d(&self) -> usize {
        self.w2.nrows()
    }
}

fn gaussian_matrix(rows: usize, cols: usize, std: f64, rng: &mut Rng) -> Mat<f64> {
    // Drawn in row-major order so the stream layout does not depend on faer.
    let data: Vec<f64> = (0..rows * cols).map(|_| std * rng.gaussian()).collect();
    linalg::from_row_major(rows, cols, &data)
}

fn centered_bias(w2: &Mat<f64>) -> Vec<f64> {
    (0..w2.nrows())
        .map(|i| {
            let row_sum: f64 = (0..w2.ncols()).map(|j| w2[(i, j)]).sum();
            -row_sum / (2.0 * PI).sqrt()
        })
        .collect()
}

/// Samples `W1 ~ N(0, alpha)` (`m x k`), `W2 ~ N(0, beta)` (`d x m`) and the bias.
pub fn sample_mlp(
    k: usize,
    m: usize,
    d: usize,
    alpha: f64,
    beta: f64,
    bias_mode: BiasMode,
    seed: u64,
) -> Result<MlpEmbedding> {
    ensure(k >= 1 && m >= 1 && d >= 1, || "k, m and d must be positive".into())?;
    ensure(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite(), || {
        "entry variances must be positive".into()
    })?;
    let mut rng = Rng::new(seed);
    let w1 = gaussian_matrix(m, k, alpha.sqrt(), &mut rng);
    let w2 = gaussian_matrix(d, m, beta.sqrt(), &mut rng);
    let b = match bias_mode {
        BiasMode::Centered => centered_bias(&w2),
        BiasMode::Zero => vec![0.0; d],
    };
    Ok(MlpEmbedding { w1, w2, b, alpha, beta, bias_mode })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandSpec {
    /// Every column is supported on the same index set.
    Shared(Vec<usize>),
    /// Column `i` is supported on set `i`; the sets are pairwise disjoint.
    Disjoint(Vec<Vec<usize>>),
}

#[derive(Debug, Clone)]
pub struct PatchMatrix {
    pub data: Mat<f64>,
    pub bands: BandSpec,
    pub omega: usize,
}

impl PatchMatrix {
    pub fn k(&self) -> usize {
        self.data.nrows()
    }
    pub fn n(&self) -> usize {
        self.data.ncols()
    }

    /// Builds a patch matrix from arbitrary columns (e.g. all-zero test patches).
    /// The declared band is the full index range.
    pub fn from_columns(data: Mat<f64>) -> Self {
        let k = data.nrows();
        PatchMatrix { data, bands: BandSpec::Shared((0..k).collect()), omega: k }
    }
}

/// Unit-norm signal with Gaussian coefficients on `band`.
fn band_limited_column(k: usize, band: &[usize], basis: &[Vec<f64>], rng: &mut Rng) -> Vec<f64> {
    loop {
        let mut col = vec![0.0; k];
        for b in basis.iter().take(band.len()) {
            let c = rng.gaussian();
            for (x, v) in col.iter_mut().zip(b) {
                *x += c * v;
            }
        }
        let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            col.iter_mut().for_each(|x| *x /= norm);
            return col;
        }
    }
}

fn validate_band(k: usize, band: &[usize]) -> Result<()> {
    ensure(!band.is_empty(), || "band must contain at least one index".into())?;
    let mut sorted = band.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    ensure(sorted.len() == band.len(), || format!("band {band:?} repeats an index"))?;
    ensure(sorted.iter().all(|&i| i < k), || {
        format!("band {band:?} has indices outside 0..{k}")
    })
}

fn columns_to_mat(k: usize, cols: &[Vec<f64>]) -> Mat<f64> {
    Mat::from_fn(k, cols.len(), |i, j| cols[j][i])
}

/// `n` unit patches of length `k` whose real spectra are supported on `band`.
pub fn band_patches(k: usize, n: usize, band: &[usize], seed: u64) -> Result<PatchMatrix> {
    ensure(k >= 1 && n >= 1, || "k and n must be positive".into())?;
    validate_band(k, band)?;
    let basis: Vec<Vec<f64>> = band.iter().map(|&i| spectral::basis_vector(k, i)).collect();
    let mut rng = Rng::new(seed);
    let cols: Vec<Vec<f64>> = (0..n)
        .map(|_| band_limited_column(k, band, &basis, &mut rng))
        .collect();
    Ok(PatchMatrix {
        data: columns_to_mat(k, &cols),
        bands: BandSpec::Shared(band.to_vec()),
        omega: band.len(),
    })
}

/// `n` patches on the contiguous disjoint blocks `[i·omega, (i+1)·omega)`.
pub fn disjoint_band_patches(k: usize, n: usize, omega: usize, seed: u64) -> Result<PatchMatrix> {
    ensure(k >= 1 && n >= 1 && omega >= 1, || "k, n and omega must be positive".into())?;
    ensure(n * omega <= k, || {
        format!("{n} disjoint bands of width {omega} do not fit in {k} spectral indices")
    })?;
    let mut rng = Rng::new(seed);
    let mut bands = Vec::with_capacity(n);
    let mut cols = Vec::with_capacity(n);
    for i in 0..n {
        let band: Vec<usize> = (i * omega..(i + 1) * omega).collect();
        let basis: Vec<Vec<f64>> = band.iter().map(|&j| spectral::basis_vector(k, j)).collect();
        cols.push(band_limited_column(k, &band, &basis, &mut rng));
        bands.push(band);
    }
    Ok(PatchMatrix { data: columns_to_mat(k, &cols), bands: BandSpec::Disjoint(bands), omega })
}

#[derive(Debug, Clone)]
pub struct EmbeddedMatrix {
    pub data: Mat<f64>,
}

/// `ReLU(W1·V)`, the `m x n` hidden activations.
pub fn hidden_activations(mlp: &MlpEmbedding, patches: &PatchMatrix) -> Result<Mat<f64>> {
    ensure(mlp.k() == patches.k(), || {
        format!("embedding expects patch size {} but patches have {}", mlp.k(), patches.k())
    })?;
    let mut z = &mlp.w1 * &patches.data;
    for j in 0..z.ncols() {
        for i in 0..z.nrows() {
            if z[(i, j)] < 0.0 {
                z[(i, j)] = 0.0;
            }
        }
    }
    Ok(z)
}

/// Per-column mean of the hidden activations.
pub fn hidden_column_means(mlp: &MlpEmbedding, patches: &PatchMatrix) -> Result<Vec<f64>> {
    let z = hidden_activations(mlp, patches)?;
    let m = z.nrows() as f64;
    Ok((0..z.ncols())
        .map(|j| (0..z.nrows()).map(|i| z[(i, j)]).sum::<f64>() / m)
        .collect())
}

/// `W2·ReLU(W1·V) + b·1ᵀ`.
pub fn embed(mlp: &MlpEmbedding, patches: &PatchMatrix) -> Result<EmbeddedMatrix> {
    let z = hidden_activations(mlp, patches)?;
    let mut out = &mlp.w2 * &z;
    for j in 0..out.ncols() {
        for i in 0..out.nrows() {
            out[(i, j)] += mlp.b[i];
        }
    }
    if !linalg::all_finite(&out) {
        return Err(Error::validation("embedding produced non-finite entries"));
    }
    Ok(EmbeddedMatrix { data: out })
}

fn nonzero_spectrum(mat: &Mat<f64>) -> Result<Vec<f64>> {
    ensure(!linalg::is_zero(mat), || "rank statistics of a zero matrix are undefined".into())?;
    let sv = linalg::singular_values(mat)?;
    ensure(sv.first().is_some_and(|&s| s > 0.0), || "largest singular value is zero".into())?;
    Ok(sv)
}

fn eps_rank_of(sv: &[f64], eps: f64) -> usize {
    sv.iter().filter(|&&s| s > eps * sv[0]).count()
}

/// Number of singular values strictly above `eps·σ₁`.
pub fn epsilon_rank(mat: &Mat<f64>, eps: f64) -> Result<usize> {
    ensure(eps > 0.0 && eps <= 1.0, || format!("eps {eps} outside (0, 1]"))?;
    Ok(eps_rank_of(&nonzero_spectrum(mat)?, eps))
}

/// `‖A‖_F / ‖A‖₂`.
pub fn stable_rank(mat: &Mat<f64>) -> Result<f64> {
    let sv = nonzero_spectrum(mat)?;
    Ok(linalg::frobenius(mat) / sv[0])
}

/// Leading `σ_j/σ₁`, at most `head` values.
pub fn relative_spectrum(mat: &Mat<f64>, head: usize) -> Result<Vec<f64>> {
    ensure(head >= 1, || "head must be at least 1".into())?;
    let sv = nonzero_spectrum(mat)?;
    Ok(sv.iter().take(head).map(|s| s / sv[0]).collect())
}

/// Largest singular value by power iteration on `AᵀA`.
pub fn spectral_norm_estimate(mat: &Mat<f64>, iters: usize, seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let mut v = Mat::from_fn(mat.ncols(), 1, |_, _| rng.gaussian());
    let mut est = 0.0;
    for _ in 0..iters {
        let n = v.norm_l2();
        if n == 0.0 {
            return 0.0;
        }
        v = v * faer::Scale(1.0 / n);
        let av = mat * &v;
        est = av.norm_l2();
        v = mat.transpose() * &av;
    }
    est
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    /// Same-band patches, sweep over the bandwidth.
    OmegaSweep,
    /// Same-band versus disjoint-band patches, sweep over the patch count.
    SameVsDisjoint,
    /// Disjoint bands without bias; tracks `σ₂/σ₁` against the patch count.
    NoBiasDecay,
}

impl Experiment {
    fn id(self) -> u64 {
        match self {
            Experiment::OmegaSweep => 1,
            Experiment::SameVsDisjoint => 2,
            Experiment::NoBiasDecay => 3,
        }
    }

    pub fn parameter(self) -> &'static str {
        match self {
            Experiment::OmegaSweep => "omega",
            _ => "n",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Experiment::OmegaSweep => "omega_sweep",
            Experiment::SameVsDisjoint => "same_vs_disjoint",
            Experiment::NoBiasDecay => "no_bias_decay",
        }
    }
}

impl std::str::FromStr for Experiment {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "omega_sweep" => Ok(Experiment::OmegaSweep),
            "same_vs_disjoint" => Ok(Experiment::SameVsDisjoint),
            "no_bias_decay" => Ok(Experiment::NoBiasDecay),
            other => Err(Error::validation(format!("unknown rank experiment '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    SameBand,
    Disjoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub k: usize,
    pub m: usize,
    pub d: usize,
    /// Patch count (fixed for `OmegaSweep`).
    pub n: usize,
    /// Bandwidth (fixed for the patch-count sweeps).
    pub omega: usize,
    pub alpha: f64,
    pub beta: f64,
    /// First spectral index of the shared band.
    pub band_start: usize,
    /// Swept values of ω or n.
    pub values: Vec<usize>,
    pub trials: usize,
    pub eps: Vec<f64>,
    pub head: usize,
    pub exec: Exec,
}

impl SweepConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        let base = SweepConfig {
            k: 64,
            m: 4096,
            d: 1024,
            n: 1024,
            omega: 2,
            alpha: 1.0,
            beta: 1.0,
            band_start: 1,
            values: vec![2, 4, 8, 16, 32],
            trials: 10,
            eps: vec![0.5, 0.1, 0.01],
            head: 32,
            exec: Exec::Parallel,
        };
        match experiment {
            Experiment::OmegaSweep => base,
            Experiment::SameVsDisjoint => SweepConfig { values: vec![4, 8, 16, 32], ..base },
            // n up to 512 disjoint bands need k >= 512 spectral indices.
            Experiment::NoBiasDecay => SweepConfig {
                k: 512,
                omega: 1,
                values: vec![8, 16, 32, 64, 128, 256, 512],
                trials: 100,
                ..base
            },
        }
    }

    fn validate(&self, experiment: Experiment) -> Result<()> {
        ensure(self.trials >= 1, || "trials must be at least 1".into())?;
        ensure(!self.values.is_empty(), || "sweep needs at least one value".into())?;
        ensure(self.eps.iter().all(|&e| e > 0.0 && e <= 1.0), || "eps values must lie in (0, 1]".into())?;
        ensure(self.head >= 1, || "head must be at least 1".into())?;
        for &v in &self.values {
            let (n, omega) = match experiment {
                Experiment::OmegaSweep => (self.n, v),
                _ => (v, self.omega),
            };
            ensure(n >= 1 && omega >= 1, || "sweep values must be positive".into())?;
            match experiment {
                Experiment::OmegaSweep => ensure(self.band_start + omega <= self.k, || {
                    format!("band [{}, {}) exceeds patch size {}", self.band_start, self.band_start + omega, self.k)
                })?,
                Experiment::SameVsDisjoint | Experiment::NoBiasDecay => ensure(n * omega <= self.k, || {
                    format!("{n} disjoint bands of width {omega} exceed patch size {}", self.k)
                })?,
            }
            if experiment == Experiment::SameVsDisjoint {
                ensure(self.band_start + omega <= self.k, || "shared band exceeds patch size".into())?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankCell {
    pub value: usize,
    pub sampler: Sampler,
    pub trial: usize,
    pub seed: u64,
    /// ε-rank for each configured ε, in config order.
    pub eps_ranks: Vec<usize>,
    /// `‖Φ‖_F / ‖Φ‖₂`.
    pub stable_rank: f64,
    /// `‖Φ‖_F² / ‖Φ‖₂²`, the sum of squared relative singular values.
    pub squared_stable_rank: f64,
    /// Smallest of the `min(d, n)` relative singular values.
    pub min_relative: f64,
    pub relative_head: Vec<f64>,
    /// `‖Φ‖₂ / (‖W2‖₂‖W1‖₂‖V‖₂)`, recorded for the bandwidth sweep only.
    pub norm_ratio: Option<f64>,
}

impl RankCell {
    pub fn sigma2_over_sigma1(&self) -> f64 {
        self.relative_head.get(1).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub experiment: Experiment,
    pub parameter: String,
    pub eps: Vec<f64>,
    pub config: SweepConfig,
    pub cells: Vec<RankCell>,
}

impl RankReport {
    pub fn values(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.cells.iter().map(|c| c.value).collect();
        v.dedup();
        v
    }

    fn grouped<F: Fn(&RankCell) -> f64>(&self, sampler: Sampler, f: F) -> Vec<(usize, Vec<f64>)> {
        self.values()
            .into_iter()
            .map(|v| {
                let xs = self
                    .cells
                    .iter()
                    .filter(|c| c.value == v && c.sampler == sampler)
                    .map(&f)
                    .collect();
                (v, xs)
            })
            .filter(|(_, xs): &(usize, Vec<f64>)| !xs.is_empty())
            .collect()
    }

    /// Median of a per-cell metric at each sweep value.
    pub fn median_by_value<F: Fn(&RankCell) -> f64>(&self, sampler: Sampler, f: F) -> Vec<(usize, f64)> {
        self.grouped(sampler, f)
            .into_iter()
            .map(|(v, mut xs)| {
                xs.sort_by(f64::total_cmp);
                (v, crate::series::quantile_sorted(&xs, 0.5))
            })
            .collect()
    }

    pub fn mean_by_value<F: Fn(&RankCell) -> f64>(&self, sampler: Sampler, f: F) -> Vec<(usize, f64)> {
        self.grouped(sampler, f)
            .into_iter()
            .map(|(v, xs)| (v, crate::series::mean(&xs)))
            .collect()
    }
}

struct CellSpec {
    value: usize,
    trial: usize,
}

fn measure(
    cfg: &SweepConfig,
    mlp: &MlpEmbedding,
    patches: &PatchMatrix,
    value: usize,
    sampler: Sampler,
    trial: usize,
    seed: u64,
    norm_ratio: bool,
) -> Result<RankCell> {
    let out = embed(mlp, patches)?;
    let sv = nonzero_spectrum(&out.data)?;
    let s1 = sv[0];
    let fro = linalg::frobenius(&out.data);
    let keep = cfg.d.min(patches.n());
    let norm_ratio = norm_ratio.then(|| {
        let w1 = spectral_norm_estimate(&mlp.w1, 30, derive_seed(seed, 11));
        let w2 = spectral_norm_estimate(&mlp.w2, 30, derive_seed(seed, 12));
        let v = spectral_norm_estimate(&patches.data, 30, derive_seed(seed, 13));
        s1 / (w1 * w2 * v)
    });
    Ok(RankCell {
        value,
        sampler,
        trial,
        seed,
        eps_ranks: cfg.eps.iter().map(|&e| eps_rank_of(&sv, e)).collect(),
        stable_rank: fro / s1,
        squared_stable_rank: (fro / s1).powi(2),
        min_relative: sv[..keep].last().copied().unwrap_or(0.0) / s1,
        relative_head: sv.iter().take(cfg.head).map(|s| s / s1).collect(),
        norm_ratio,
    })
}

fn run_cell(experiment: Experiment, cfg: &SweepConfig, cell: &CellSpec, master_seed: u64) -> Result<Vec<RankCell>> {
    let seed = cell_seed(master_seed, &[experiment.id(), cell.value as u64, cell.trial as u64]);
    let bias = match experiment {
        Experiment::NoBiasDecay => BiasMode::Zero,
        _ => BiasMode::Centered,
    };
    let mlp = sample_mlp(cfg.k, cfg.m, cfg.d, cfg.alpha, cfg.beta, bias, derive_seed(seed, 1))?;
    let shared_band = |omega: usize| (cfg.band_start..cfg.band_start + omega).collect::<Vec<_>>();
    match experiment {
        Experiment::OmegaSweep => {
            let omega = cell.value;
            let v = band_patches(cfg.k, cfg.n, &shared_band(omega), derive_seed(seed, 2))?;
            Ok(vec![measure(cfg, &mlp, &v, omega, Sampler::SameBand, cell.trial, seed, true)?])
        }
        Experiment::SameVsDisjoint => {
            let n = cell.value;
            let v = band_patches(cfg.k, n, &shared_band(cfg.omega), derive_seed(seed, 2))?;
            let u = disjoint_band_patches(cfg.k, n, cfg.omega, derive_seed(seed, 3))?;
            Ok(vec![
                measure(cfg, &mlp, &v, n, Sampler::SameBand, cell.trial, seed, false)?,
                measure(cfg, &mlp, &u, n, Sampler::Disjoint, cell.trial, seed, false)?,
            ])
        }
        Experiment::NoBiasDecay => {
            let n = cell.value;
            let u = disjoint_band_patches(cfg.k, n, cfg.omega, derive_seed(seed, 3))?;
            Ok(vec![measure(cfg, &mlp, &u, n, Sampler::Disjoint, cell.trial, seed, false)?])
        }
    }
}

/// Runs one of the sweep experiments. Cells are independent and may run in
/// parallel; the report is ordered by (value, sampler, trial).
pub fn rank_sweep(experiment: Experiment, cfg: &SweepConfig, master_seed: u64) -> Result<RankReport> {
    cfg.validate(experiment)?;
    let cells: Vec<CellSpec> = cfg
        .values
        .iter()
        .flat_map(|&value| (0..cfg.trials).map(move |trial| CellSpec { value, trial }))
        .collect();
    let results = map_cells(cfg.exec, &cells, |c| run_cell(experiment, cfg, c, master_seed));
    let mut out = Vec::with_capacity(cells.len() * 2);
    for r in results {
        out.extend(r?);
    }
    let order: Vec<usize> = cfg.values.clone();
    out.sort_by_key(|c| {
        let pos = order.iter().position(|&v| v == c.value).unwrap_or(usize::MAX);
        (pos, c.sampler, c.trial)
    });
    Ok(RankReport {
        experiment,
        parameter: experiment.parameter().to_string(),
        eps: cfg.eps.clone(),
        config: cfg.clone(),
        cells: out,
    })
}
