use std::hint::black_box;

use criterion::{BenchmarkId, Criterion, criterion_group, criterion_main};
use dropf_core::drcc::maximize_violation;
use dropf_core::pwl::ops_search;
use dropf_core::{OpsConfig, VFunction};

fn search(c: &mut Criterion) {
    let vf = VFunction::new(0.05, 1.0).unwrap();
    let cfg = OpsConfig::default();
    let mut group = c.benchmark_group("ops_search");
    for pieces in [2, 3, 5] {
        group.bench_with_input(BenchmarkId::from_parameter(pieces), &pieces, |b, &p| {
            b.iter(|| ops_search(&vf, black_box(p), &cfg).unwrap())
        });
    }
    group.finish();
}

fn separation(c: &mut Criterion) {
    let vf = VFunction::new(0.05, 1.0).unwrap();
    c.bench_function("maximize_violation", |b| {
        b.iter(|| maximize_violation(&vf, black_box(2.0), black_box(0.5), black_box(3.0)))
    });
}

criterion_group!(benches, search, separation);
criterion_main!(benches);
