use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use segprune::attention::{aggregate_scores, scores_from_qk, softmax_attention};
use segprune_bench::qk;

fn attention(c: &mut Criterion) {
    let mut group = c.benchmark_group("attention");
    group.sample_size(20);
    for n in [188usize, 375, 750] {
        let input = qk(n, 0);
        group.bench_with_input(BenchmarkId::new("softmax", n), &n, |b, _| {
            b.iter(|| softmax_attention(black_box(&input)))
        });
        let attn = softmax_attention(&input);
        group.bench_with_input(BenchmarkId::new("aggregate", n), &n, |b, _| {
            b.iter(|| aggregate_scores(black_box(&attn)))
        });
        group.bench_with_input(BenchmarkId::new("scores_from_qk", n), &n, |b, _| {
            b.iter(|| scores_from_qk(black_box(&input)))
        });
    }
    group.finish();
}

criterion_group!(benches, attention);
criterion_main!(benches);
