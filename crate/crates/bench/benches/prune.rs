use cast_bench::instance;
use cast_core::robust::{build_violation_sets, max_compatible_set, CompatibilityBounds, TimePairPolicy};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn bounds(c: &mut Criterion) {
    let lib = instance(2, 0.0, 0).library;
    c.bench_function("compatibility_bounds", |b| b.iter(|| CompatibilityBounds::new(&lib, 0.03).unwrap()));
}

fn violations_and_bnb(c: &mut Criterion) {
    let mut group = c.benchmark_group("prune");
    for ratio in [0.1, 0.4, 0.6] {
        let s = instance(8, ratio, 3);
        let bounds = CompatibilityBounds::new(&s.library, 0.03).unwrap();
        let sets = build_violation_sets(&s.measurements, &bounds, TimePairPolicy::default()).unwrap();
        group.bench_with_input(BenchmarkId::new("violations", ratio), &s, |b, s| {
            b.iter(|| build_violation_sets(&s.measurements, &bounds, TimePairPolicy::default()).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("max_compatible_set", ratio), &sets, |b, sets| {
            b.iter(|| max_compatible_set(sets, 8, s.library.num_keypoints()).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bounds, violations_and_bnb);
criterion_main!(benches);
