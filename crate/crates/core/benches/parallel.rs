use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use kpp_core::par::{map_indexed, map_indexed_seq};
use kpp_core::survival::{extinction_replica, ExtinctionExperiment};

fn replicas(c: &mut Criterion) {
    let e = ExtinctionExperiment::new(1.0, 0.0, 1.0, 0.25, 16, 8, 1);
    let mut g = c.benchmark_group("extinction_replicas");
    g.sample_size(10);
    for n in [4usize, 16] {
        g.bench_with_input(BenchmarkId::new("parallel", n), &n, |b, &n| {
            b.iter(|| map_indexed(n, |i| extinction_replica(&e, i).unwrap()))
        });
        g.bench_with_input(BenchmarkId::new("sequential", n), &n, |b, &n| {
            b.iter(|| map_indexed_seq(n, |i| extinction_replica(&e, i).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, replicas);
criterion_main!(benches);
