use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use streamfuse::{CounterSet, ParallelConfig};
use streamfuse_bench::suite::{gen_inputs, BenchName, Engine, Prepared};

const N: usize = 1_000_000;

fn bench_group(c: &mut Criterion, group: &str, engines: &[Engine]) {
    let mut g = c.benchmark_group(group);
    g.throughput(Throughput::Elements(N as u64));
    g.sample_size(20);
    for name in BenchName::ALL {
        let ds = gen_inputs(name, N);
        for &engine in engines {
            let p = Prepared::new(name, engine, ParallelConfig::default()).unwrap();
            g.bench_with_input(
                BenchmarkId::new(name.as_str(), engine.as_str()),
                &ds,
                |b, ds| b.iter(|| black_box(p.run(ds, &mut CounterSet::default()).unwrap())),
            );
        }
    }
    g.finish();
}

fn engines(c: &mut Criterion) {
    bench_group(
        c,
        "engines",
        &[Engine::Baseline, Engine::Pull, Engine::Push, Engine::Fused],
    );
}

fn sequential_vs_parallel(c: &mut Criterion) {
    bench_group(
        c,
        "parallel",
        &[
            Engine::Push,
            Engine::PushPar,
            Engine::Fused,
            Engine::FusedPar,
        ],
    );
}

criterion_group!(benches, engines, sequential_vs_parallel);
criterion_main!(benches);
