use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use tsbias::mlplab::{self, Experiment, SweepConfig};
use tsbias::regprobe::{self, Oracle};
use tsbias::simplab::{self, OccamConfig};
use tsbias::Exec;

fn execs() -> [(&'static str, Exec); 2] {
    [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)]
}

fn rank_sweep(c: &mut Criterion) {
    let mut g = c.benchmark_group("rank_sweep");
    g.sample_size(10);
    for (name, exec) in execs() {
        let mut cfg = SweepConfig::defaults(Experiment::OmegaSweep);
        cfg.m = 256;
        cfg.d = 64;
        cfg.n = 128;
        cfg.values = vec![2, 4, 8];
        cfg.trials = 4;
        cfg.exec = exec;
        g.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| mlplab::rank_sweep(Experiment::OmegaSweep, cfg, 1).unwrap())
        });
    }
    g.finish();
}

fn occam_pairs(c: &mut Criterion) {
    let mut g = c.benchmark_group("occam_pairs");
    for (name, exec) in execs() {
        let cfg = OccamConfig { exec, ..OccamConfig::default() };
        g.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| simplab::occam_pairs(&simplab::DEFAULT_DK_GRID, 50, cfg, 1).unwrap())
        });
    }
    g.finish();
}

fn bridge_oracle(c: &mut Criterion) {
    let q: Vec<f64> = (0..=10).map(|i| i as f64 * 0.05).collect();
    let ctx = regprobe::bridge_contexts(&q, 20, 5, 1000, 20, 1).unwrap();
    let mut g = c.benchmark_group("bridge_oracle");
    for (name, exec) in execs() {
        g.bench_function(name, |b| b.iter(|| regprobe::oracle_forecasts(Oracle::Mean, &ctx, 5, exec).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, rank_sweep, occam_pairs, bridge_oracle);
criterion_main!(benches);
