//! Seed sweeps on the rayon pool against the plain sequential loop.
//!
//! Without the `parallel` feature both arms run sequentially.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mgame::game::{GameConfig, Payoff, Trace};
use mgame::sweep::{sweep, sweep_sequential};

fn digest(trace: &Trace) -> mgame::Result<i64> {
    Ok(trace.demands().iter().map(|a| a.abs()).sum())
}

fn bench_sweeps(c: &mut Criterion) {
    let seeds: Vec<u64> = (0..8).collect();
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10);
    for (label, cfg) in [
        (
            "sgn_m1_n401",
            GameConfig::new(401, 1, 2, Payoff::Step).with_steps(5_000),
        ),
        (
            "x_m2_n1601",
            GameConfig::new(1601, 2, 2, Payoff::Proportional).with_steps(5_000),
        ),
    ] {
        group.bench_with_input(BenchmarkId::new("parallel", label), &cfg, |b, cfg| {
            b.iter(|| sweep(cfg, &seeds, digest).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("sequential", label), &cfg, |b, cfg| {
            b.iter(|| sweep_sequential(cfg, &seeds, digest).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_sweeps);
criterion_main!(benches);
