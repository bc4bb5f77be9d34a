//! Direct vs cluster engine, and sequential vs rayon execution, on one full
//! Z + coefficients pass.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use maxent_cluster::synth::{generate_instance, Instance, InstanceShape};
use maxent_cluster::{make_engine, EngineKind, Exec};

fn medium() -> InstanceShape {
    InstanceShape {
        vocab: 4000,
        topics: 20,
        topic_words: 80,
        predecessors: 150,
        successors: 40,
        topics_per_prev: 3,
        ..InstanceShape::large()
    }
}

fn run(inst: &Instance, kind: EngineKind, exec: Exec) {
    let engine = make_engine(kind, &inst.features, exec);
    black_box(engine.pass(&inst.params, &inst.hist).expect("pass"));
}

fn engines(c: &mut Criterion) {
    let inst = generate_instance(&medium(), 1).expect("instance");
    let mut g = c.benchmark_group("pass_v4000");
    g.sample_size(10);
    for (name, kind, exec) in [
        ("direct_seq", EngineKind::Direct, Exec::SEQUENTIAL),
        ("direct_par", EngineKind::Direct, Exec::parallel()),
        ("cluster_seq", EngineKind::Cluster, Exec::SEQUENTIAL),
        ("cluster_par", EngineKind::Cluster, Exec::parallel()),
    ] {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| run(&inst, kind, exec)));
    }
    g.finish();
}

fn cluster_large(c: &mut Criterion) {
    let inst = generate_instance(&InstanceShape::large(), 9).expect("instance");
    let mut g = c.benchmark_group("cluster_v20000");
    for (name, exec) in [("seq", Exec::SEQUENTIAL), ("par", Exec::parallel())] {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| run(&inst, EngineKind::Cluster, exec)));
    }
    g.finish();
}

fn vocabulary_scaling(c: &mut Criterion) {
    let mut g = c.benchmark_group("cluster_vs_vocab");
    for v in [5_000, 10_000, 20_000, 40_000] {
        let inst = generate_instance(&InstanceShape { vocab: v, ..InstanceShape::large() }, 9).expect("instance");
        g.bench_with_input(BenchmarkId::from_parameter(v), &inst, |b, inst| {
            b.iter(|| run(inst, EngineKind::Cluster, Exec::SEQUENTIAL))
        });
    }
    g.finish();
}

criterion_group!(benches, engines, cluster_large, vocabulary_scaling);
criterion_main!(benches);
