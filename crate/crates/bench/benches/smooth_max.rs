use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use martmax::smooth_max::{directional_d3, explicit_coefficients, smooth_max, SmoothMaxParams};
use martmax::SeedStream;
use rand::Rng;

fn random_vec(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect()
}

fn bench_smooth_max(c: &mut Criterion) {
    let params = SmoothMaxParams::new(2.0).unwrap();
    let mut rng = SeedStream::new(1).rng();
    let mut group = c.benchmark_group("smooth_max/value");
    for d in [8usize, 64, 512, 4096] {
        let x = random_vec(&mut rng, d);
        group.bench_with_input(BenchmarkId::from_parameter(d), &x, |b, x| {
            b.iter(|| smooth_max(black_box(x), &params).unwrap())
        });
    }
    group.finish();
}

fn bench_third_derivative(c: &mut Criterion) {
    let params = SmoothMaxParams::new(2.0).unwrap();
    let mut rng = SeedStream::new(2).rng();
    let mut group = c.benchmark_group("smooth_max/d3");
    for d in [4usize, 6, 64, 512] {
        let v = random_vec(&mut rng, d);
        let x = random_vec(&mut rng, d);
        let y = random_vec(&mut rng, d);
        let z = random_vec(&mut rng, d);
        group.bench_with_input(BenchmarkId::new("factored", d), &d, |b, _| {
            b.iter(|| directional_d3(black_box(&v), &x, &y, &z, &params).unwrap())
        });
        // The explicit table is the O(d^3) oracle; only tractable small.
        if d <= 6 {
            group.bench_with_input(BenchmarkId::new("explicit", d), &d, |b, _| {
                b.iter(|| {
                    let coeffs = explicit_coefficients(black_box(&v), &params).unwrap();
                    coeffs.third_directional(&x, &y, &z).unwrap()
                })
            });
        }
    }
    group.finish();
}

criterion_group!(benches, bench_smooth_max, bench_third_derivative);
criterion_main!(benches);
