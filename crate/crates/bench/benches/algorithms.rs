use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sleepmst_bench::{path_graph, random_graph};
use sleepmst_core::graph::mst_oracle;
use sleepmst_core::mst_deterministic::run_deterministic_mst;
use sleepmst_core::mst_randomized::{run_randomized_mst, RandomizedParams};
use sleepmst_core::mst_tradeoff::{run_tradeoff_mst, TradeoffParams};
use sleepmst_core::RunConfig;

fn randomized(c: &mut Criterion) {
    let mut group = c.benchmark_group("randomized");
    group.sample_size(10);
    for n in [64usize, 256, 1024] {
        let g = random_graph(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &g, |b, g| {
            b.iter(|| run_randomized_mst(black_box(g), &RunConfig::for_graph(g, 1), RandomizedParams::default()).unwrap())
        });
    }
    group.finish();
}

fn deterministic(c: &mut Criterion) {
    let mut group = c.benchmark_group("deterministic");
    group.sample_size(10);
    for n in [32usize, 64, 128] {
        let g = random_graph(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &g, |b, g| {
            b.iter(|| run_deterministic_mst(black_box(g), &RunConfig::for_graph(g, 0)).unwrap())
        });
    }
    group.finish();
}

fn tradeoff(c: &mut Criterion) {
    let mut group = c.benchmark_group("tradeoff_path_1024");
    group.sample_size(10);
    let g = path_graph(1024);
    for k in [5u32, 7, 10] {
        group.bench_with_input(BenchmarkId::new("k", k), &k, |b, &k| {
            b.iter(|| run_tradeoff_mst(black_box(&g), &RunConfig::for_graph(&g, 11), TradeoffParams::new(k)).unwrap())
        });
    }
    group.finish();
}

fn oracle(c: &mut Criterion) {
    let g = random_graph(4096);
    c.bench_function("kruskal_4096", |b| b.iter(|| mst_oracle(black_box(&g))));
}

criterion_group!(benches, randomized, deterministic, tradeoff, oracle);
criterion_main!(benches);
