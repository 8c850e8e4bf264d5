use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use martmax::gaussian::{estimate_levy_concentration, CovMatrix};
use martmax::harness::two_sample_ks_distance;
use martmax::SeedStream;
use rand::Rng;
use rand_distr::StandardNormal;

fn bench_two_sample(c: &mut Criterion) {
    let mut rng = SeedStream::new(11).rng();
    let mut group = c.benchmark_group("harness/two_sample_ks");
    for size in [1000usize, 10_000, 100_000] {
        let xs: Vec<f64> = (0..size).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let ys: Vec<f64> = (0..size)
            .map(|_| rng.sample::<f64, _>(StandardNormal) + 0.1)
            .collect();
        group.bench_with_input(BenchmarkId::from_parameter(size), &size, |b, _| {
            b.iter(|| two_sample_ks_distance(black_box(&xs), black_box(&ys)).unwrap())
        });
    }
    group.finish();
}

fn bench_levy_sweep(c: &mut Criterion) {
    let cov = CovMatrix::equicorrelated(10, 0.5).unwrap();
    let stream = SeedStream::new(12);
    let mut group = c.benchmark_group("gaussian/levy_concentration");
    for reps in [1000usize, 10_000] {
        group.bench_with_input(BenchmarkId::from_parameter(reps), &reps, |b, &reps| {
            b.iter(|| estimate_levy_concentration(black_box(&cov), 0.1, &stream, reps).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_two_sample, bench_levy_sweep);
criterion_main!(benches);
