use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::params::Grid;

/// Synthetic generators, probes and metrics for inductive biases of patch-based forecasters.
#[derive(Debug, Parser)]
#[command(name = "tsbias", version, about)]
pub struct Cli {
    /// JSON file whose keys mirror the long flag names.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed (overridden by TSBIAS_SEED).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for the parallel sections.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Evaluate every cell on the calling thread.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate context batches.
    Gen(GenArgs),
    /// Run a probe.
    #[command(subcommand)]
    Probe(Probe),
    /// Build augmented tasks or score forecasts.
    #[command(subcommand)]
    Eval(Eval),
    /// Render a CSV table as a static SVG plot.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GenKind {
    Bridge,
    Occam,
    Harmonic,
    Lorenz,
    Envelope,
    Outlier,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub kind: Option<GenKind>,
    /// Context records (.ctx.jsonl).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Future records for `occam` (.ctx.jsonl).
    #[arg(long)]
    pub futures: Option<PathBuf>,
    /// Flip rates for `bridge`, e.g. `0,0.1,...,0.5`.
    #[arg(long)]
    pub q_grid: Option<Grid>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Samples per branch of the periodic walk.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub length: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    /// ΔK targets for `occam`.
    #[arg(long)]
    pub dk_grid: Option<Grid>,
    /// Pairs per ΔK target.
    #[arg(long)]
    pub pairs: Option<usize>,
    /// Base family for `occam`: linear or sinusoid.
    #[arg(long)]
    pub family: Option<String>,
    /// Frequencies (cycles per sample) for `harmonic` and `outlier`.
    #[arg(long)]
    pub freqs: Option<Grid>,
    #[arg(long)]
    pub amps: Option<Grid>,
    #[arg(long)]
    pub noise: Option<f64>,
    /// Number of series.
    #[arg(long)]
    pub count: Option<usize>,
    /// Envelope shape: bidirectional or unidirectional.
    #[arg(long)]
    pub envelope: Option<String>,
    #[arg(long)]
    pub carrier: Option<f64>,
    #[arg(long)]
    pub magnitude: Option<f64>,
    /// Per-sample outlier probability.
    #[arg(long)]
    pub rate: Option<f64>,
    /// Integration step for `lorenz`.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Lorenz coordinate: 0, 1 or 2.
    #[arg(long)]
    pub component: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Probe {
    /// Spectral rank sweeps of random MLP patch embeddings.
    Rank(RankArgs),
    /// Embedding norms, PCA, attention histograms and periodicity scores.
    Geometry(GeometryArgs),
    /// Regression-to-the-mean bridge curves, loss landscapes and bin traces.
    Regression(RegressionArgs),
    /// Occam win rates from log-probability dumps or the reference scorer.
    Simplicity(SimplicityArgs),
}

#[derive(Debug, Args)]
pub struct RankArgs {
    /// omega_sweep, same_vs_disjoint or no_bias_decay.
    #[arg(long)]
    pub experiment: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub omega: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Swept values of ω or n.
    #[arg(long)]
    pub values: Option<Grid>,
    #[arg(long)]
    pub trials: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeometryMode {
    Norms,
    Pca,
    Histogram,
    Periodicity,
}

#[derive(Debug, Args)]
pub struct GeometryArgs {
    #[arg(long, value_enum)]
    pub mode: Option<GeometryMode>,
    /// Embedding dumps (norms, pca), attention dumps (histogram) or contexts (periodicity).
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub components: Option<usize>,
    /// linear, semilogx, semilogy or loglog.
    #[arg(long)]
    pub scale: Option<String>,
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub motif_len: Option<usize>,
    /// Patch size compared against patch size 1.
    #[arg(long)]
    pub patch: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegressionMode {
    Bridge,
    Landscape,
    Trace,
}

#[derive(Debug, Args)]
pub struct RegressionArgs {
    #[arg(long, value_enum)]
    pub mode: Option<RegressionMode>,
    /// Bridge contexts (bridge) or logit dumps (trace).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Forecasts joined to the bridge contexts by id.
    #[arg(long)]
    pub forecasts: Option<PathBuf>,
    /// Built-in forecaster instead of a forecast file: mode or mean.
    #[arg(long)]
    pub oracle: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Truth distribution on {0, 1/2, 1}.
    #[arg(long)]
    pub truth: Option<Grid>,
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Vocabulary indices traced by `trace`.
    #[arg(long)]
    pub bin_ids: Option<Grid>,
}

#[derive(Debug, Args)]
pub struct SimplicityArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub dk_grid: Option<Grid>,
    #[arg(long)]
    pub pairs: Option<usize>,
    #[arg(long)]
    pub family: Option<String>,
    /// Teacher-forced log-prob dumps with ids `<pair>/simple` and `<pair>/complex`.
    #[arg(long)]
    pub logprobs: Option<PathBuf>,
    /// Noise scale of the reference Gaussian scorer.
    #[arg(long)]
    pub sigma_ref: Option<f64>,
    #[arg(long)]
    pub tie_eps: Option<f64>,
    /// Quantile bins of Δℓ against ΔK, written to --bins-out.
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub bins_out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Eval {
    /// Shrink one half of every context by α.
    Scale(AugmentArgs),
    /// Shift two thirds of every context by β.
    Offset(AugmentArgs),
    /// Score forecasts against targets.
    Metrics(MetricsArgs),
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Records whose last `prediction_length` values are the target.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Augmented contexts.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Targets tagged with the renormalization map.
    #[arg(long)]
    pub targets_out: Option<PathBuf>,
    /// α for scale, β for offset.
    #[arg(long)]
    pub parameter: Option<f64>,
    /// large or small (scale); high or low (offset).
    #[arg(long)]
    pub regime: Option<String>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Target records (values = target).
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub forecasts: Option<PathBuf>,
    /// Context records used to scale MASE.
    #[arg(long)]
    pub contexts: Option<PathBuf>,
    /// Baseline forecasts for the relative score.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    /// Metric for the relative score: wql, mse, mae or mase.
    #[arg(long)]
    pub metric: Option<String>,
    #[arg(long)]
    pub season: Option<usize>,
    /// Per-dataset CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Aggregate JSON summary file.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportKind {
    Rank,
    Bridge,
    Winrate,
    Histogram,
    Bins,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, value_enum)]
    pub kind: Option<ReportKind>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Rank column plotted by `rank`.
    #[arg(long)]
    pub metric: Option<String>,
    #[arg(long)]
    pub title: Option<String>,
    /// Logarithmic x axis (histogram and bins).
    #[arg(long)]
    pub log_x: Option<bool>,
    /// Logarithmic y axis (histogram and bins).
    #[arg(long)]
    pub log_y: Option<bool>,
}
