use brauer_core::simulate::{run_with, ExecMode, RunConfig, Tracker};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn replicas(c: &mut Criterion) {
    let mut g = c.benchmark_group("replicas");
    g.sample_size(10);
    for n in [3usize, 5] {
        let cfg =
            RunConfig::new(n, 20_000, 1, vec![Tracker::Loops, Tracker::Transverse, Tracker::Resets]).with_replicas(32);
        for (name, mode) in [("sequential", ExecMode::Sequential), ("parallel", ExecMode::Parallel)] {
            g.bench_with_input(BenchmarkId::new(name, n), &cfg, |b, cfg| b.iter(|| run_with(cfg, mode).unwrap()));
        }
    }
    g.finish();
}

criterion_group!(benches, replicas);
criterion_main!(benches);
