use std::path::PathBuf;

use tsbias::modelio::ContextRecord;
use tsbias::rng::derive_seed;
use tsbias::siggen::{self, EnvelopeKind, Harmonic, HarmonicSpec, LorenzParams, OutlierMode};
use tsbias::simplab::{self, Family, OccamConfig};
use tsbias::{regprobe, Series};

use super::{summary, Summary};
use crate::args::{GenArgs, GenKind};
use crate::error::{usage, Result};
use crate::params::Grid;
use crate::{Ctx, Outputs};

pub fn run(ctx: &Ctx, a: GenArgs, out: &mut Outputs) -> Result<Summary> {
    let p = &ctx.params;
    let kind: GenKind = p.require("kind", a.kind)?;
    let path: PathBuf = p.require("out", a.out)?;
    let records = match kind {
        GenKind::Bridge => {
            let q = p.or("q-grid", a.q_grid, "0,0.05,...,0.5".parse::<Grid>().expect("valid grid"))?.non_empty("q-grid")?;
            let trials = p.or("trials", a.trials, 100)?;
            let steps = p.or("steps", a.steps, 5)?;
            let length = p.or("length", a.length, 1000)?;
            let horizon = p.or("horizon", a.horizon, 20)?;
            regprobe::bridge_contexts(&q.0, trials, steps, length, horizon, ctx.seed)?
        }
        GenKind::Occam => {
            let futures: PathBuf = p.require("futures", a.futures)?;
            let cfg = occam_config(ctx, a.family, a.length, a.horizon)?;
            let grid = p.or("dk-grid", a.dk_grid, Grid(simplab::DEFAULT_DK_GRID.iter().map(|&x| x as f64).collect()))?;
            let n = p.or("pairs", a.pairs, 200)?;
            let pairs = simplab::occam_pairs(&grid.non_empty("dk-grid")?.to_uints("dk-grid")?, n, &cfg, ctx.seed)?;
            let (contexts, fut) = simplab::occam_records(&pairs);
            out.records(&futures, &fut)?;
            contexts
        }
        GenKind::Harmonic => {
            let freqs = p.require::<Grid>("freqs", a.freqs)?.non_empty("freqs")?;
            let amps = p.or("amps", a.amps, Grid(vec![1.0; freqs.0.len()]))?;
            if amps.0.len() != freqs.0.len() {
                return Err(usage("--amps must have one entry per frequency"));
            }
            let noise = p.or("noise", a.noise, 0.0)?;
            let length = p.or("length", a.length, 512)?;
            let horizon = p.or("horizon", a.horizon, 64)?;
            let count = p.or("count", a.count, 1)?;
            let spec = HarmonicSpec {
                components: freqs.0.iter().zip(&amps.0).map(|(&freq, &amp)| Harmonic { freq, amp, phase: 0.0 }).collect(),
                noise_std: noise,
                length,
                dt: 1.0,
            };
            (0..count)
                .map(|i| {
                    let seed = derive_seed(ctx.seed, i as u64);
                    let s = siggen::harmonic(&spec, seed)?;
                    Ok(record(format!("harmonic-{i}"), s, horizon, "harmonic").tag("seed", seed))
                })
                .collect::<Result<Vec<_>>>()?
        }
        GenKind::Lorenz => {
            let mut lp = LorenzParams::default();
            lp.steps = p.or("length", a.length, lp.steps)?;
            lp.dt = p.or("dt", a.dt, lp.dt)?;
            lp.component = p.or("component", a.component, lp.component)?;
            let horizon = p.or("horizon", a.horizon, 64)?;
            vec![record("lorenz-0".into(), siggen::lorenz(&lp)?, horizon, "lorenz")]
        }
        GenKind::Envelope => {
            let shape: String = p.or("envelope", a.envelope, "bidirectional".into())?;
            let kind = match shape.as_str() {
                "bidirectional" => EnvelopeKind::Bidirectional,
                "unidirectional" => EnvelopeKind::Unidirectional,
                other => return Err(usage(format!("unknown envelope '{other}'"))),
            };
            let length = p.or("length", a.length, 512)?;
            let carrier = p.or("carrier", a.carrier, 0.05)?;
            let horizon = p.or("horizon", a.horizon, 64)?;
            vec![record(format!("envelope-{shape}"), siggen::envelope_sine(kind, length, carrier)?, horizon, "envelope")]
        }
        GenKind::Outlier => {
            let freqs = p.or("freqs", a.freqs, Grid(vec![0.02]))?.non_empty("freqs")?;
            let length = p.or("length", a.length, 512)?;
            let magnitude = p.or("magnitude", a.magnitude, 10.0)?;
            let rate = p.or("rate", a.rate, 0.01)?;
            let horizon = p.or("horizon", a.horizon, 64)?;
            let count = p.or("count", a.count, 1)?;
            let spec = HarmonicSpec {
                components: freqs.0.iter().map(|&freq| Harmonic { freq, amp: 1.0, phase: 0.0 }).collect(),
                noise_std: 0.0,
                length,
                dt: 1.0,
            };
            let base = siggen::harmonic(&spec, ctx.seed)?;
            (0..count)
                .map(|i| {
                    let seed = derive_seed(ctx.seed, i as u64);
                    let (s, pos) = siggen::inject_outliers(&base, OutlierMode::Bernoulli, magnitude, rate, seed)?;
                    Ok(record(format!("outlier-{i}"), s, horizon, "outlier").tag("outliers", pos.len()).tag("seed", seed))
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    out.records(&path, &records)?;
    Ok(summary! { "kind" => format!("{kind:?}").to_lowercase(), "records" => records.len() })
}

fn record(id: String, s: Series, horizon: usize, experiment: &str) -> ContextRecord {
    let dt = s.dt();
    let mut r = ContextRecord::new(id, s.into_values(), horizon).tag("experiment", experiment);
    r.dt = dt;
    r
}

/// Occam generation settings shared by `gen --kind occam` and `probe simplicity`.
pub(crate) fn occam_config(
    ctx: &Ctx,
    family: Option<String>,
    context_len: Option<usize>,
    horizon: Option<usize>,
) -> Result<OccamConfig> {
    let p = &ctx.params;
    let mut cfg = OccamConfig { exec: ctx.exec, ..OccamConfig::default() };
    let family: String = p.or("family", family, "sinusoid".into())?;
    cfg.family = family.parse::<Family>()?;
    cfg.context_len = p.or("length", context_len, cfg.context_len)?;
    cfg.horizon = p.or("horizon", horizon, cfg.horizon)?;
    Ok(cfg)
}
