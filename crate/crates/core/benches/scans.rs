use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use herding::engine::{PeriodConfig, WeightVector};
use herding::models::{random_mrf, RandomModelSpec};
use herding::scan::{autocorrelation_study, bifurcation_scan, linear_grid};
use herding::Exec;

const EXECS: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn temperature_scan(c: &mut Criterion) {
    let m = random_mrf(RandomModelSpec::new(4, 2, 7)).unwrap();
    let w0 = WeightVector::from(&m.moments);
    let temps = linear_grid(0.05, 0.5, 16);
    let cfg = PeriodConfig { burn_in: 2_000, ..PeriodConfig::default() };
    let mut g = c.benchmark_group("bifurcation_scan");
    g.sample_size(10);
    for (name, exec) in EXECS {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| bifurcation_scan(&m.features, &m.moments, &w0, &temps, &cfg, exec).unwrap())
        });
    }
    g.finish();
}

fn seed_sweep(c: &mut Criterion) {
    let seeds: Vec<u64> = (0..16).collect();
    let mut g = c.benchmark_group("autocorrelation_study");
    g.sample_size(10);
    for (name, exec) in EXECS {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| autocorrelation_study(10, 7, &seeds, 5_000, 5, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, temperature_scan, seed_sweep);
criterion_main!(benches);
