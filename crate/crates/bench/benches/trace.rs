use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use tfluct_core::ensembles::{sample, ApplyPath, EnsembleKind, EnsembleSpec, EntryDistribution};
use tfluct_core::statistics::trace_powers;

fn apply_paths(c: &mut Criterion) {
    let mut group = c.benchmark_group("apply");
    let n = 1024;
    let v: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
    for b_n in [16, 64, 128, 256, 512, 1023] {
        let spec = EnsembleSpec::new(EnsembleKind::ToeplitzReal, n, b_n, EntryDistribution::Gaussian);
        let op = sample(&spec, 1).unwrap();
        for (name, path) in [("direct", ApplyPath::Direct), ("fft", ApplyPath::Fft)] {
            group.bench_with_input(BenchmarkId::new(name, b_n), &b_n, |bch, _| {
                bch.iter(|| op.apply_with(black_box(&v), path).unwrap())
            });
        }
    }
    group.finish();
}

fn trace_sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("trace_powers");
    group.sample_size(10);
    for (n, b_n) in [(256, 255), (512, 79), (512, 511)] {
        let spec = EnsembleSpec::new(EnsembleKind::ToeplitzReal, n, b_n, EntryDistribution::Gaussian);
        let op = sample(&spec, 2).unwrap();
        group.bench_with_input(BenchmarkId::new(format!("n{n}"), b_n), &b_n, |bch, _| {
            bch.iter(|| trace_powers(black_box(&op), 4).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, apply_paths, trace_sweep);
criterion_main!(benches);
