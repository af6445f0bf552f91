//! Grid-evaluation throughput: rayon versus the sequential fallback.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use convmat::grid::{frequency_grid, GridSpacing};
use convmat::pll::{analyze_with, Parallelism, PllConfig, SourceSet};

fn bench_analyze(c: &mut Criterion) {
    let cfg = PllConfig::default();
    let grid = frequency_grid(1e4, cfg.f_dco_hz() / 2.0, 2048, GridSpacing::Log).unwrap();
    let sources = SourceSet::all();

    let mut group = c.benchmark_group("analyze_2048pt");
    group.sample_size(10);
    group.bench_function("sequential", |b| {
        b.iter(|| {
            analyze_with(
                black_box(&cfg),
                black_box(&grid),
                sources,
                Parallelism::Sequential,
            )
            .unwrap()
        })
    });
    #[cfg(feature = "parallel")]
    group.bench_function("rayon", |b| {
        b.iter(|| {
            analyze_with(
                black_box(&cfg),
                black_box(&grid),
                sources,
                Parallelism::Rayon,
            )
            .unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, bench_analyze);
criterion_main!(benches);
