//! Geometric and periodicity metrics over embedded vectors and raw series.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::series::Series;

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

fn same_dim(u: &[f64], v: &[f64]) -> Result<()> {
    ensure(u.len() == v.len(), || format!("dimension mismatch: {} vs {}", u.len(), v.len()))
}

/// `arccos(|u·v| / (‖u‖‖v‖))`, in `[0, π/2]`.
pub fn pair_angle(u: &[f64], v: &[f64]) -> Result<f64> {
    same_dim(u, v)?;
    let (nu, nv) = (norm(u), norm(v));
    ensure(nu > 0.0 && nv > 0.0, || "angle with a zero vector is undefined".into())?;
    let c = (dot(u, v).abs() / (nu * nv)).min(1.0);
    Ok(c.acos())
}

/// `‖u − v‖ / (‖u‖ + ‖v‖)`, in `[0, 1]`.
pub fn pair_rel_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    same_dim(u, v)?;
    let denom = norm(u) + norm(v);
    ensure(denom > 0.0, || "relative distance between two zero vectors is undefined".into())?;
    let diff: Vec<f64> = u.iter().zip(v).map(|(a, b)| a - b).collect();
    Ok((norm(&diff) / denom).min(1.0))
}

/// A `d x L` block of embedded vectors, one column per position or patch.
#[derive(Debug, Clone)]
pub struct EmbeddingDumpView {
    pub vectors: Mat<f64>,
    pub source: String,
    pub layer: Option<usize>,
    pub patch_size: usize,
}

impl EmbeddingDumpView {
    pub fn new(vectors: Mat<f64>, source: impl Into<String>, layer: Option<usize>, patch_size: usize) -> Result<Self> {
        ensure(vectors.ncols() >= 1, || "embedding dump has no positions".into())?;
        ensure(crate::linalg::all_finite(&vectors), || "embedding dump has non-finite entries".into())?;
        Ok(EmbeddingDumpView { vectors, source: source.into(), layer, patch_size })
    }

    pub fn positions(&self) -> usize {
        self.vectors.ncols()
    }
}

/// Euclidean norm of every column.
pub fn norm_profile(dump: &EmbeddingDumpView) -> Result<Series> {
    let v = &dump.vectors;
    let norms = (0..v.ncols())
        .map(|j| (0..v.nrows()).map(|i| v[(i, j)] * v[(i, j)]).sum::<f64>().sqrt())
        .collect();
    Series::new(norms, 1.0, format!("norms:{}", dump.source))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HistScale {
    Linear,
    SemilogX,
    SemilogY,
    LogLog,
}

impl HistScale {
    /// Whether bins are equal-width in `log10(x)`.
    pub fn log_x(self) -> bool {
        matches!(self, HistScale::SemilogX | HistScale::LogLog)
    }

    pub fn log_y(self) -> bool {
        matches!(self, HistScale::SemilogY | HistScale::LogLog)
    }
}

impl std::str::FromStr for HistScale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(HistScale::Linear),
            "semilogx" => Ok(HistScale::SemilogX),
            "semilogy" => Ok(HistScale::SemilogY),
            "loglog" => Ok(HistScale::LogLog),
            other => Err(Error::validation(format!("unknown histogram scale '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub scale: HistScale,
    /// Bin edges in the data domain (not log-transformed).
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub total: u64,
    /// Values left out: non-finite, or non-positive on a log-x scale.
    pub excluded: u64,
}

impl Histogram {
    /// Indices of strict local maxima of the 3-bin moving average of
    /// `log10(1 + count)`. Edge bins compare against their single neighbour.
    pub fn local_maxima(&self) -> Vec<usize> {
        let logc: Vec<f64> = self.counts.iter().map(|&c| (1.0 + c as f64).log10()).collect();
        let n = logc.len();
        let smooth: Vec<f64> = (0..n)
            .map(|i| {
                let lo = i.saturating_sub(1);
                let hi = (i + 1).min(n - 1);
                logc[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
            })
            .collect();
        (0..n)
            .filter(|&i| {
                let left = i == 0 || smooth[i] > smooth[i - 1];
                let right = i + 1 == n || smooth[i] > smooth[i + 1];
                left && right && smooth[i] > 0.0
            })
            .collect()
    }
}

/// Equal-width histogram in the linear or `log10` domain.
pub fn build_histogram(values: &[f64], scale: HistScale, bin_count: usize) -> Result<Histogram> {
    ensure(bin_count >= 2, || "histogram needs at least 2 bins".into())?;
    let mut excluded = 0u64;
    let mut xs = Vec::with_capacity(values.len());
    for &v in values {
        if !v.is_finite() || (scale.log_x() && v <= 0.0) {
            excluded += 1;
        } else {
            xs.push(if scale.log_x() { v.log10() } else { v });
        }
    }
    ensure(!xs.is_empty(), || "no values can be placed on this histogram scale".into())?;
    let mut lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bin_count as f64;
    let mut counts = vec![0u64; bin_count];
    for x in &xs {
        let b = (((x - lo) / width).floor() as usize).min(bin_count - 1);
        counts[b] += 1;
    }
    let bin_edges = (0..=bin_count)
        .map(|i| {
            let e = if i == bin_count { hi } else { lo + i as f64 * width };
            if scale.log_x() {
                10f64.powf(e)
            } else {
                e
            }
        })
        .collect();
    Ok(Histogram { scale, bin_edges, counts, total: xs.len() as u64, excluded })
}

/// Start indices of patch-aligned motifs that end before the final motif.
fn candidate_starts(len: usize, motif_len: usize, k: usize) -> Result<Vec<usize>> {
    ensure(motif_len >= 1 && k >= 1, || "motif length and patch size must be positive".into())?;
    ensure(len >= 2 * motif_len, || {
        format!("series of length {len} has no motif of length {motif_len} disjoint from the last one")
    })?;
    let last = len - motif_len;
    Ok((0..).map(|i| i * k).take_while(|&s| s + motif_len <= last).collect())
}

fn last_motif(s: &Series, motif_len: usize) -> &[f64] {
    &s.values()[s.len() - motif_len..]
}

/// Best R² between the last motif and an earlier patch-aligned motif.
pub fn best_matching_score(s: &Series, motif_len: usize, k: usize) -> Result<f64> {
    let starts = candidate_starts(s.len(), motif_len, k)?;
    let target = last_motif(s, motif_len);
    let m = crate::series::mean(target);
    let sst: f64 = target.iter().map(|x| (x - m) * (x - m)).sum();
    if sst == 0.0 {
        return Err(Error::UndefinedScore("final motif is constant".into()));
    }
    let vals = s.values();
    Ok(starts
        .iter()
        .map(|&st| {
            let sse: f64 = target.iter().zip(&vals[st..st + motif_len]).map(|(x, c)| (x - c) * (x - c)).sum();
            1.0 - sse / sst
        })
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Smallest `‖x* − c‖ / (‖x*‖ + 1e-8)` over the same candidates.
pub fn min_rel_distance(s: &Series, motif_len: usize, k: usize) -> Result<f64> {
    let starts = candidate_starts(s.len(), motif_len, k)?;
    let target = last_motif(s, motif_len);
    let denom = norm(target) + 1e-8;
    let vals = s.values();
    Ok(starts
        .iter()
        .map(|&st| {
            let d2: f64 = target.iter().zip(&vals[st..st + motif_len]).map(|(x, c)| (x - c) * (x - c)).sum();
            d2.sqrt() / denom
        })
        .fold(f64::INFINITY, f64::min))
}

/// Sample autocorrelation `r(1..=max_lag)`.
pub fn autocorr(s: &Series, max_lag: usize) -> Result<Vec<f64>> {
    let x = s.values();
    ensure(max_lag < x.len(), || format!("max lag {max_lag} must be below length {}", x.len()))?;
    let m = crate::series::mean(x);
    let c: Vec<f64> = x.iter().map(|v| v - m).collect();
    let denom: f64 = c.iter().map(|v| v * v).sum();
    ensure(denom > 0.0, || "autocorrelation of a constant series is undefined".into())?;
    Ok((1..=max_lag)
        .map(|lag| c.iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>() / denom)
        .collect())
}

#[derive(Debug, Clone)]
pub struct PcaProjection {
    /// `n_components x L` scores.
    pub scores: Mat<f64>,
    /// `d x n_components` unit principal directions, sign-fixed so the
    /// largest-magnitude entry is positive.
    pub components: Mat<f64>,
    pub explained: Vec<f64>,
}

/// Centres each feature across positions and projects onto the leading
/// principal directions.
pub fn pca_project(dump: &EmbeddingDumpView, n_components: usize) -> Result<PcaProjection> {
    let x = &dump.vectors;
    let (d, l) = (x.nrows(), x.ncols());
    ensure(n_components >= 1 && n_components <= d.min(l), || {
        format!("n_components {n_components} must lie in 1..={}", d.min(l))
    })?;
    let means: Vec<f64> = (0..d).map(|i| (0..l).map(|j| x[(i, j)]).sum::<f64>() / l as f64).collect();
    let xc = Mat::from_fn(d, l, |i, j| x[(i, j)] - means[i]);
    let total: f64 = crate::linalg::frobenius(&xc).powi(2);
    ensure(total > 0.0, || "embedding dump has zero variance across positions".into())?;

    // Eigendecomposition of the d x d scatter matrix.
    let scatter = &xc * xc.transpose();
    let eig = scatter
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::LinAlg(format!("{e:?}")))?;
    let vals = eig.S().column_vector();
    let vecs = eig.U();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    let mut components = Mat::<f64>::zeros(d, n_components);
    let mut explained = Vec::with_capacity(n_components);
    for (c, &idx) in order.iter().take(n_components).enumerate() {
        let col: Vec<f64> = (0..d).map(|i| vecs[(i, idx)]).collect();
        let pivot = col.iter().copied().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for i in 0..d {
            components[(i, c)] = sign * col[i];
        }
        explained.push((vals[idx].max(0.0) / total).min(1.0));
    }
    let scores = components.transpose() * &xc;
    Ok(PcaProjection { scores, components, explained })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn sine(len: usize, period: f64) -> Series {
        Series::from_values((0..len).map(|t| (2.0 * PI * t as f64 / period).sin()).collect()).unwrap()
    }

    #[test]
    fn angle_examples() {
        assert!(pair_angle(&[1.0, 2.0], &[1.0, 2.0]).unwrap().abs() < 1e-7);
        assert!((pair_angle(&[1.0, 0.0], &[0.0, 3.0]).unwrap() - PI / 2.0).abs() < 1e-12);
        assert!((pair_angle(&[1.0, 0.0], &[1.0, 1.0]).unwrap() - PI / 4.0).abs() < 1e-12);
        assert!((pair_angle(&[1.0, 0.0], &[-1.0, 0.0]).unwrap()).abs() < 1e-12);
        assert!(pair_angle(&[0.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(pair_angle(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn rel_distance_examples() {
        assert_eq!(pair_rel_distance(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((pair_rel_distance(&[1.0, 2.0], &[-1.0, -2.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pair_rel_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 2f64.sqrt() / 2.0).abs() < 1e-12);
        assert_eq!(pair_rel_distance(&[0.0], &[2.0]).unwrap(), 1.0);
        assert!(pair_rel_distance(&[0.0], &[0.0]).is_err());
    }

    #[test]
    fn norm_profile_examples() {
        let v = Mat::from_fn(2, 3, |i, j| match j {
            0 => [1.0, 0.0][i],
            1 => [0.0, 3.0][i],
            _ => 0.0,
        });
        let dump = EmbeddingDumpView::new(v, "t", None, 1).unwrap();
        assert_eq!(norm_profile(&dump).unwrap().values(), &[1.0, 3.0, 0.0]);
    }

    #[test]
    fn histogram_examples() {
        let h = build_histogram(&[1.0, 10.0, 100.0], HistScale::LogLog, 3).unwrap();
        assert_eq!(h.counts, vec![1, 1, 1]);
        assert!((h.bin_edges[0] - 1.0).abs() < 1e-12 && (h.bin_edges[3] - 100.0).abs() < 1e-9);

        let h = build_histogram(&[2.0; 7], HistScale::Linear, 5).unwrap();
        assert_eq!(h.counts.iter().filter(|&&c| c > 0).count(), 1);
        assert_eq!(h.total, 7);

        let h = build_histogram(&[-1.0, 0.0, 1.0, 2.0], HistScale::SemilogX, 2).unwrap();
        assert_eq!((h.total, h.excluded), (2, 2));
        assert!(build_histogram(&[-1.0, 0.0], HistScale::LogLog, 4).is_err());
        assert!(build_histogram(&[1.0], HistScale::Linear, 1).is_err());
    }

    #[test]
    fn lognormal_mixture_is_bimodal_on_semilogy() {
        let mut rng = Rng::new(17);
        let mut xs = Vec::new();
        for i in 0..20000 {
            let centre: f64 = if i % 2 == 0 { 0.0 } else { 3.0 };
            xs.push(10f64.powf(centre + 0.2 * rng.gaussian()));
        }
        let h = build_histogram(&xs, HistScale::SemilogX, 60).unwrap();
        assert!(h.local_maxima().len() >= 2);
        let h = build_histogram(&xs.iter().map(|x| x.log10()).collect::<Vec<_>>(), HistScale::SemilogY, 60).unwrap();
        assert!(h.local_maxima().len() >= 2);
    }

    #[test]
    fn best_matching_examples() {
        let s = sine(256, 8.0);
        assert!((best_matching_score(&s, 64, 16).unwrap() - 1.0).abs() < 1e-12);

        let x: Vec<f64> = (0..4).map(|t| (t * t) as f64).collect();
        let c = 0.7;
        let mut v: Vec<f64> = x.iter().map(|a| a + c).collect();
        v.extend(&x);
        let s = Series::from_values(v).unwrap();
        let m = crate::series::mean(&x);
        let sst: f64 = x.iter().map(|a| (a - m) * (a - m)).sum();
        let want = 1.0 - 4.0 * c * c / sst;
        assert!((best_matching_score(&s, 4, 4).unwrap() - want).abs() < 1e-12);

        // Candidates for k=16 start at residues 0 and 2 mod 7; the final motif starts at 3.
        let p = sine(151, 7.0);
        assert!(best_matching_score(&p, 64, 16).unwrap() < best_matching_score(&p, 64, 1).unwrap());

        let flat = Series::from_values(vec![1.0; 200]).unwrap();
        assert!(matches!(best_matching_score(&flat, 64, 1), Err(Error::UndefinedScore(_))));
        assert!(best_matching_score(&sine(100, 8.0), 64, 1).is_err());
    }

    #[test]
    fn min_rel_distance_examples() {
        assert!(min_rel_distance(&sine(256, 8.0), 64, 16).unwrap() < 1e-8);
        assert_eq!(min_rel_distance(&Series::from_values(vec![0.0; 200]).unwrap(), 64, 1).unwrap(), 0.0);
        let ramp = Series::from_values((0..300).map(|t| t as f64).collect()).unwrap();
        assert!(min_rel_distance(&ramp, 64, 1).unwrap() <= min_rel_distance(&ramp, 64, 16).unwrap());
    }

    #[test]
    fn autocorr_examples() {
        let s = sine(20 * 50, 50.0);
        let r = autocorr(&s, 50).unwrap();
        assert!((r[49] - 1.0).abs() < 0.02 + 50.0 / 1000.0);
        assert!((r[24] + 1.0).abs() < 0.02 + 25.0 / 1000.0);

        let long = sine(200 * 50, 50.0);
        let r = autocorr(&long, 50).unwrap();
        assert!((r[49] - 1.0).abs() < 0.02);
        assert!((r[24] + 1.0).abs() < 0.02);

        let mut rng = Rng::new(3);
        let noise = Series::from_values((0..100_000).map(|_| rng.gaussian()).collect()).unwrap();
        assert!(autocorr(&noise, 10).unwrap().iter().all(|r| r.abs() < 0.02));
        assert!(autocorr(&Series::from_values(vec![2.0; 10]).unwrap(), 3).is_err());
        assert!(autocorr(&noise, 100_000).is_err());
    }

    #[test]
    fn pca_examples() {
        let rank1 = Mat::from_fn(3, 50, |i, j| [1.0, -2.0, 0.5][i] * (j as f64).sin());
        let p = pca_project(&EmbeddingDumpView::new(rank1, "r1", None, 1).unwrap(), 2).unwrap();
        assert!(p.explained[0] >= 1.0 - 1e-10);

        let mut rng = Rng::new(4);
        let cloud = Mat::from_fn(2, 100_000, |_, _| rng.gaussian());
        let p = pca_project(&EmbeddingDumpView::new(cloud, "iso", None, 1).unwrap(), 2).unwrap();
        assert!(p.explained.iter().all(|e| (e - 0.5).abs() < 0.02));
        assert!(p.explained[0] >= p.explained[1]);

        let tiny = EmbeddingDumpView::new(Mat::zeros(2, 3), "z", None, 1).unwrap();
        assert!(pca_project(&tiny, 3).is_err());
    }

    #[test]
    fn pca_directions_survive_duplicating_every_position() {
        let mut rng = Rng::new(9);
        let scale = [3.0, 2.0, 1.0, 0.5];
        let x = Mat::from_fn(4, 40, |i, _| scale[i] * rng.gaussian());
        let twice = Mat::from_fn(4, 80, |i, j| x[(i, j % 40)]);
        let a = pca_project(&EmbeddingDumpView::new(x, "a", None, 1).unwrap(), 3).unwrap();
        let b = pca_project(&EmbeddingDumpView::new(twice, "b", None, 1).unwrap(), 3).unwrap();
        for c in 0..3 {
            let d: f64 = (0..4).map(|i| a.components[(i, c)] * b.components[(i, c)]).sum();
            assert!((d.abs() - 1.0).abs() < 1e-9);
            assert!((a.explained[c] - b.explained[c]).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn angle_scale_invariant(u in prop::collection::vec(-5.0f64..5.0, 3), v in prop::collection::vec(-5.0f64..5.0, 3), c in prop_oneof![-10.0f64..-0.1, 0.1f64..10.0]) {
            prop_assume!(norm(&u) > 1e-3 && norm(&v) > 1e-3);
            let cu: Vec<f64> = u.iter().map(|x| c * x).collect();
            let a = pair_angle(&u, &v).unwrap();
            prop_assert!((pair_angle(&cu, &v).unwrap() - a).abs() < 1e-6);
            prop_assert!((pair_angle(&v, &u).unwrap() - a).abs() < 1e-12);
            prop_assert!((0.0..=PI / 2.0).contains(&a));
        }

        #[test]
        fn rel_distance_scale_covariant(u in prop::collection::vec(-5.0f64..5.0, 3), v in prop::collection::vec(-5.0f64..5.0, 3), c in 0.1f64..10.0) {
            prop_assume!(norm(&u) + norm(&v) > 1e-3);
            let d = pair_rel_distance(&u, &v).unwrap();
            let cu: Vec<f64> = u.iter().map(|x| c * x).collect();
            let cv: Vec<f64> = v.iter().map(|x| c * x).collect();
            prop_assert!((pair_rel_distance(&cu, &cv).unwrap() - d).abs() < 1e-12);
            prop_assert!((pair_rel_distance(&v, &u).unwrap() - d).abs() < 1e-15);
            prop_assert!((0.0..=1.0).contains(&d));
        }

        #[test]
        fn histogram_permutation_invariant(mut xs in prop::collection::vec(0.001f64..1000.0, 1..200), seed in any::<u64>()) {
            let h = build_histogram(&xs, HistScale::LogLog, 10).unwrap();
            let mut rng = Rng::new(seed);
            for i in (1..xs.len()).rev() {
                let j = rng.below(i as u64 + 1) as usize;
                xs.swap(i, j);
            }
            prop_assert_eq!(h, build_histogram(&xs, HistScale::LogLog, 10).unwrap());
        }

        #[test]
        fn unit_patch_dominates(xs in prop::collection::vec(-3.0f64..3.0, 140..260), k in 2usize..20) {
            let s = Series::from_values(xs).unwrap();
            prop_assert!(best_matching_score(&s, 64, 1).unwrap() >= best_matching_score(&s, 64, k).unwrap());
            prop_assert!(min_rel_distance(&s, 64, 1).unwrap() <= min_rel_distance(&s, 64, k).unwrap());
        }

        #[test]
        fn autocorr_reversal(xs in prop::collection::vec(-3.0f64..3.0, 20..200)) {
            let s = Series::from_values(xs.clone()).unwrap();
            let mut rev = xs;
            rev.reverse();
            let r = Series::from_values(rev).unwrap();
            let a = autocorr(&s, 10).unwrap();
            let b = autocorr(&r, 10).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
                prop_assert!(x.abs() <= 1.0 + 1e-12);
            }
        }
    }
}
