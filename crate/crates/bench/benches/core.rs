use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dsm_bench::{registry, shuffled_store};
use dsm_core::{build_assessment_matrix, rank_candidates, ReplayFilter, SourceId, Timestamp};
use std::hint::black_box;

fn matrix(c: &mut Criterion) {
    let mut group = c.benchmark_group("build_assessment_matrix");
    for n in [3, 10, 50] {
        let reg = registry(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &reg, |b, reg| {
            b.iter(|| build_assessment_matrix(black_box(reg), Timestamp(0)))
        });
    }
    group.finish();
}

fn ranking(c: &mut Criterion) {
    let mut group = c.benchmark_group("rank_candidates");
    for n in [10, 50] {
        let reg = registry(n);
        let m = build_assessment_matrix(&reg, Timestamp(0));
        let candidates: Vec<SourceId> = reg.sources()[1..].iter().map(|s| s.id.clone()).collect();
        let reference = reg.sources()[0].id.clone();
        group.bench_function(BenchmarkId::from_parameter(n), |b| {
            b.iter(|| rank_candidates(&m, reference.as_str(), black_box(&candidates)).unwrap())
        });
    }
    group.finish();
}

fn replay(c: &mut Criterion) {
    let store = shuffled_store(10_000);
    c.bench_function("replay_10000", |b| {
        b.iter(|| {
            store
                .replay(Timestamp::MIN, Timestamp::MAX, &ReplayFilter::default())
                .unwrap()
        })
    });
}

criterion_group!(benches, matrix, ranking, replay);
criterion_main!(benches);
