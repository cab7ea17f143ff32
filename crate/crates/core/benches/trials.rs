use criterion::{criterion_group, criterion_main, Criterion};
use xlirs_core::geometry::GeometryConfig;
use xlirs_core::runner::{run_experiment_with, Execution, ExperimentConfig, SweepConfig};

fn bench_config() -> ExperimentConfig {
    ExperimentConfig {
        geometry: GeometryConfig {
            bs_antennas: 16,
            irs_nx: 8,
            irs_ny: 6,
            ..GeometryConfig::default()
        },
        sweep: SweepConfig {
            snr_db: vec![10.0],
            users: vec![3],
            trials: 16,
            base_seed: 1,
        },
        ..ExperimentConfig::default()
    }
}

fn trials(c: &mut Criterion) {
    let config = bench_config();
    let mut group = c.benchmark_group("sweep_16_trials");
    group.sample_size(10);
    group.bench_function("sequential", |b| {
        b.iter(|| run_experiment_with(&config, Execution::Sequential).unwrap())
    });
    group.bench_function("parallel", |b| {
        b.iter(|| run_experiment_with(&config, Execution::Parallel).unwrap())
    });
    group.finish();
}

criterion_group!(benches, trials);
criterion_main!(benches);
