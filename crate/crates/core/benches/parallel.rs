use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use maskwatch::aggregate::aggregate_posts;
use maskwatch::par::Execution;
use maskwatch::records::{PolicyKind, StudyConfig};
use maskwatch::studies::{correlation_study, policy_study, trend_study};
use maskwatch::synth::{generate_corpus, SynthParams};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn bench(c: &mut Criterion) {
    let cfg = StudyConfig::default();
    let params = SynthParams {
        posts_per_day: 100,
        fit_sample_rate: 0.0,
        ..SynthParams::default()
    };
    let corpus = generate_corpus(&params, &cfg, Execution::Parallel).expect("synthetic corpus");
    let agg = aggregate_posts(&corpus.posts, &cfg, Execution::Parallel);

    let mut group = c.benchmark_group("aggregate_posts");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| aggregate_posts(black_box(&corpus.posts), &cfg, exec))
        });
    }
    group.finish();

    let mut group = c.benchmark_group("studies");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| {
                (
                    trend_study(&agg, &cfg, exec),
                    policy_study(&agg, &cfg, PolicyKind::StayAtHome, exec),
                    correlation_study(&agg, &corpus.cases, &cfg, exec),
                )
            })
        });
    }
    group.finish();

    let mut group = c.benchmark_group("generate_corpus");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| generate_corpus(&params, &cfg, exec).expect("synthetic corpus"))
        });
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
