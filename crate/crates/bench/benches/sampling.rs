use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use martmax::gaussian::{sample_gaussian, CovMatrix};
use martmax::martingale::{
    compute_sigma_schedule, CoupledSampler, F0Atom, ScenarioKind, ScenarioParams, ScenarioSpec,
};
use martmax::SeedStream;

fn bench_gaussian_sampling(c: &mut Criterion) {
    let mut group = c.benchmark_group("gaussian/sample_1000");
    for d in [4usize, 32, 128] {
        let cov = CovMatrix::equicorrelated(d, 0.5).unwrap();
        let stream = SeedStream::new(7);
        group.bench_with_input(BenchmarkId::from_parameter(d), &d, |b, _| {
            b.iter(|| sample_gaussian(black_box(&cov), &stream, 1000).unwrap())
        });
    }
    group.finish();
}

fn bench_coupled_paths(c: &mut Criterion) {
    let mut group = c.benchmark_group("martingale/coupled_path");
    for (d, n) in [(2usize, 64usize), (8, 256), (8, 1024)] {
        let scenario = ScenarioSpec::new(
            ScenarioKind::MarkovVolatility,
            d,
            n,
            ScenarioParams {
                vol_strength: 0.6,
                ..Default::default()
            },
            vec![F0Atom::new("w", 1.0).with_x0(0.5)],
        )
        .unwrap();
        let schedule =
            compute_sigma_schedule(&scenario, 0, &SeedStream::new(3), 512).unwrap();
        let sampler = CoupledSampler::new(&scenario, 0, &schedule).unwrap();
        let mut rng = SeedStream::new(4).rng();
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("d{d}_n{n}")),
            &n,
            |b, _| b.iter(|| black_box(sampler.sample(&mut rng))),
        );
    }
    group.finish();
}

criterion_group!(benches, bench_gaussian_sampling, bench_coupled_paths);
criterion_main!(benches);
