use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use dsm_core::operators::{check_monotone, registry, SampleBall};
use dsm_core::study::{parse_config, run_study};
use dsm_core::Execution;

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn study(c: &mut Criterion) {
    let cfg = parse_config("problem=composite\ndelta=1e-1,1e-2,1e-3\nseeds=4").unwrap();
    let mut g = c.benchmark_group("study");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| run_study(&cfg, exec).unwrap())
        });
    }
    g.finish();
}

fn monotonicity(c: &mut Criterion) {
    let p = registry::lookup("composite").unwrap();
    let ball = SampleBall::new(p.y().coords().to_vec(), 1.0);
    let mut g = c.benchmark_group("monotonicity");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| check_monotone(p.operator(), p.weights(), &ball, 20_000, 7, exec))
        });
    }
    g.finish();
}

criterion_group!(benches, study, monotonicity);
criterion_main!(benches);
