use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

use dpfm_bench::{gaussian, zipf};
use dpfm_core::experiment::{run_method, Method, MethodConfig};
use dpfm_core::query::{generate_workload, QueryEngine, WorkloadSpec};

fn sanitizers_2d(c: &mut Criterion) {
    let m = gaussian(2, 1_000_000, 1);
    let cfg = MethodConfig::default();
    let mut g = c.benchmark_group("sanitize_1000x1000");
    g.sample_size(10);
    for method in Method::ALL {
        g.bench_function(method.name(), |b| {
            b.iter(|| run_method(black_box(&m), method, 0.1, 7, &cfg).unwrap())
        });
    }
    g.finish();
}

fn daf_by_dimension(c: &mut Criterion) {
    let cfg = MethodConfig::default();
    let mut g = c.benchmark_group("daf_by_dimension");
    g.sample_size(10);
    for d in [2usize, 4, 6] {
        let m = zipf(d, 1_000_000, 2);
        g.throughput(Throughput::Elements(m.nnz() as u64));
        for method in [Method::DafEntropy, Method::DafHomogeneity] {
            g.bench_with_input(BenchmarkId::new(method.name(), d), &m, |b, m| {
                b.iter(|| run_method(m, method, 0.1, 3, &cfg).unwrap())
            });
        }
    }
    g.finish();
}

fn query_answering(c: &mut Criterion) {
    let m = gaussian(2, 1_000_000, 1);
    let cfg = MethodConfig::default();
    let workload = generate_workload(&WorkloadSpec::random(1000, 5), m.extents()).unwrap();
    let mut g = c.benchmark_group("answer_1000_queries");
    g.sample_size(10);
    g.throughput(Throughput::Elements(workload.len() as u64));
    for method in [Method::Identity, Method::Ebp, Method::DafEntropy] {
        let sm = run_method(&m, method, 0.1, 7, &cfg).unwrap().sanitized;
        let engine = QueryEngine::new(&sm);
        g.bench_function(method.name(), |b| b.iter(|| engine.answer_all(black_box(&workload)).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, sanitizers_2d, daf_by_dimension, query_answering);
criterion_main!(benches);
