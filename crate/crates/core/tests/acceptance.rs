//! Acceptance suite: one test per criterion, each printing a pass/fail
//! line and enforcing its stated tolerance and runtime budget.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use std::time::Instant;

use martmax::bounds::{corollary_bound, d1_bound, theorem1_bound, BoundInputs};
use martmax::gaussian::normal_cdf;
use martmax::harness::{
    dkw_halfwidth, estimate_kolmogorov, run_sweep, McSettings, TSamplingMode,
};
use martmax::martingale::{
    compute_atom_statistics, F0Atom, ScenarioKind, ScenarioParams, ScenarioSpec,
};
use martmax::report::write_results;
use martmax::verify::{self, VerifySettings};
use martmax::SeedStream;

const ACCEPTANCE_SEED: u64 = 0x5eed_ba5e;

fn finish(criterion: &str, started: Instant, budget_s: f64, passed: bool) {
    let elapsed = started.elapsed().as_secs_f64();
    println!(
        "acceptance {criterion}: {} ({elapsed:.2}s of {budget_s:.0}s budget)",
        if passed { "PASS" } else { "FAIL" }
    );
    assert!(passed, "criterion failed: {criterion}");
    assert!(
        elapsed < budget_s,
        "criterion exceeded runtime budget: {criterion} took {elapsed:.2}s"
    );
}

fn settings() -> VerifySettings {
    VerifySettings {
        base_seed: ACCEPTANCE_SEED,
        ..VerifySettings::default()
    }
}

#[test]
fn criterion_01_smooth_max_sandwich() {
    let started = Instant::now();
    let result = verify::suite_sandwich(&settings()).unwrap();
    println!("  {}", result.detail);
    finish("1 smooth-max sandwich", started, 10.0, result.passed);
}

#[test]
fn criterion_02_derivative_calculus() {
    let started = Instant::now();
    let result = verify::suite_derivatives(&settings()).unwrap();
    println!("  {}", result.detail);
    finish("2 derivative calculus", started, 30.0, result.passed);
}

#[test]
fn criterion_03_coefficient_sums() {
    let started = Instant::now();
    let result = verify::suite_coefficients(&settings()).unwrap();
    println!("  {}", result.detail);
    finish("3 coefficient-sum identities", started, 10.0, result.passed);
}

#[test]
fn criterion_04_explicit_moment_bound() {
    let started = Instant::now();
    let result = verify::suite_moment_bound(&settings()).unwrap();
    println!("  {}", result.detail);
    finish("4 explicit moment bound", started, 60.0, result.passed);
}

#[test]
fn criterion_05_anti_concentration_boundedness() {
    let started = Instant::now();
    let result = verify::suite_anti_concentration(&settings()).unwrap();
    println!("  {}", result.detail);
    finish("5 anti-concentration constant", started, 120.0, result.passed);
}

#[test]
fn criterion_06_coupling_null_case() {
    let started = Instant::now();
    // Exact-Gaussian scenario: untruncated mixture increments, so M(S) and
    // M(T) share one law and the distance must sit inside the band.
    let scenario = ScenarioSpec::new(
        ScenarioKind::CondIndepGaussianMixture,
        3,
        8,
        ScenarioParams::default(),
        vec![F0Atom::new("w", 1.0)],
    )
    .unwrap();
    let stream = SeedStream::with_stream(ACCEPTANCE_SEED, 600);
    let stats = compute_atom_statistics(&scenario, 0, &stream, 2000).unwrap();
    let band = 2.0 * dkw_halfwidth(5000, 0.01).unwrap();
    assert!(
        (band - 0.046).abs() < 5e-4,
        "combined 99% band should be about 0.046, got {band}"
    );
    let repetitions = 200;
    let mut hits = 0;
    for rep in 0..repetitions {
        let est = estimate_kolmogorov(
            &scenario,
            0,
            &stats,
            &SeedStream::with_stream(ACCEPTANCE_SEED, 1000 + rep),
            5000,
            5000,
            TSamplingMode::Direct,
            0.01,
        )
        .unwrap();
        if est.distance <= band {
            hits += 1;
        }
    }
    let rate = hits as f64 / repetitions as f64;
    println!("  null-case coverage {rate:.3} (nominal 0.99, floor 0.97)");
    finish("6 coupling null case", started, 300.0, rate >= 0.97);
}

#[test]
fn criterion_07_d1_exact_oracle() {
    let started = Instant::now();
    // Exact law of S = (xi_1 + ... + xi_4)/2 by enumerating the 16 sign
    // patterns, then sup_r |F_S(r) - Phi(r)| over the atoms.
    let n = 4usize;
    let mut values = Vec::new();
    for mask in 0u32..(1 << n) {
        let s: f64 = (0..n)
            .map(|i| if mask >> i & 1 == 1 { 1.0 } else { -1.0 })
            .sum::<f64>()
            / (n as f64).sqrt();
        values.push(s);
    }
    values.sort_by(f64::total_cmp);
    let total = values.len() as f64;
    let mut exact = 0.0_f64;
    let mut below = 0usize;
    let mut i = 0usize;
    while i < values.len() {
        let v = values[i];
        let mut j = i;
        while j < values.len() && values[j] == v {
            j += 1;
        }
        let cdf_left = below as f64 / total;
        let cdf_right = j as f64 / total;
        let phi = normal_cdf(v);
        exact = exact.max((cdf_left - phi).abs()).max((cdf_right - phi).abs());
        below = j;
        i = j;
    }
    assert!(
        (exact - 0.1875).abs() < 1e-15,
        "enumerated distance should be 3/16, got {exact}"
    );

    // The Monte Carlo estimate must agree within the combined band.
    let scenario = ScenarioSpec::new(
        ScenarioKind::IidBounded,
        1,
        n,
        ScenarioParams::default(),
        vec![F0Atom::new("w", 1.0)],
    )
    .unwrap();
    let stream = SeedStream::with_stream(ACCEPTANCE_SEED, 700);
    let stats = compute_atom_statistics(&scenario, 0, &stream, 0).unwrap();
    let est = estimate_kolmogorov(
        &scenario,
        0,
        &stats,
        &stream.child(3),
        10_000,
        10_000,
        TSamplingMode::Direct,
        0.01,
    )
    .unwrap();
    let gap = (est.distance - exact).abs();
    println!(
        "  exact {exact:.6}, MC {:.6}, |gap| {gap:.6} <= band {:.6}",
        est.distance, est.band_halfwidth
    );
    finish(
        "7 d=1 exact oracle",
        started,
        30.0,
        gap <= est.band_halfwidth,
    );
}

#[test]
fn criterion_08_gamma_floor() {
    let started = Instant::now();
    let result = verify::suite_gamma_floor(&settings()).unwrap();
    println!("  {}", result.detail);
    finish("8 Gamma floor", started, 30.0, result.passed);
}

#[test]
fn criterion_09_bound_algebra() {
    let started = Instant::now();
    let mut passed = true;

    // (a) At alpha = 1/4 with beta = 0 the two bounds coincide to 1e-12.
    for (d, n, v_min_sq, v_max_sq, gamma) in [
        (2usize, 2usize, 1.0, 1.0, 1.0),
        (8, 64, 0.7, 2.1, 0.37),
        (100, 1024, 1.3, 1.3, 5.0),
    ] {
        let inputs =
            BoundInputs::new(d, n, v_min_sq, v_max_sq, 0.0, gamma, 0.25, 1.0).unwrap();
        let t = theorem1_bound(&inputs).unwrap();
        let c = corollary_bound(&inputs).unwrap();
        passed &= (t - c).abs() <= 1e-12 * c.abs();
    }

    // (b) Scale invariance under (beta, Gamma, v) -> (c^2 b, c^3 G, c v).
    let base = BoundInputs::new(6, 128, 0.7, 2.1, 0.3, 0.9, 0.125, 1.0).unwrap();
    for scale in [0.01_f64, 3.7, 250.0] {
        let s2 = scale * scale;
        let scaled = BoundInputs::new(
            6,
            128,
            s2 * 0.7,
            s2 * 2.1,
            s2 * 0.3,
            s2 * scale * 0.9,
            0.125,
            1.0,
        )
        .unwrap();
        let pairs = [
            (theorem1_bound(&base).unwrap(), theorem1_bound(&scaled).unwrap()),
            (corollary_bound(&base).unwrap(), corollary_bound(&scaled).unwrap()),
            (
                d1_bound(base.beta_prime(), base.gamma_prime(), 1.0).unwrap(),
                d1_bound(scaled.beta_prime(), scaled.gamma_prime(), 1.0).unwrap(),
            ),
        ];
        for (a, b) in pairs {
            passed &= (a - b).abs() <= 1e-12 * a.abs();
        }
    }

    // (c) The trivial-partition closed form makes bound(16n)/bound(n) equal
    // the exact formula ratio.
    let d = 4usize;
    let n = 64usize;
    let bound_at = |steps: usize| -> f64 {
        let scenario = ScenarioSpec::new(
            ScenarioKind::IidBounded,
            d,
            steps,
            ScenarioParams::default(),
            vec![F0Atom::new("w", 1.0)],
        )
        .unwrap();
        let stats = compute_atom_statistics(
            &scenario,
            0,
            &SeedStream::with_stream(ACCEPTANCE_SEED, 900),
            0,
        )
        .unwrap();
        let inputs = BoundInputs::from_stats(&stats, 0.0, 1.0).unwrap();
        theorem1_bound(&inputs).unwrap()
    };
    let ratio = bound_at(16 * n) / bound_at(n);
    let expected = (((16 * d * n) as f64).ln() / ((d * n) as f64).ln())
        * 16.0_f64.powf(-0.125);
    println!("  bound(16n)/bound(n) = {ratio:.15} vs formula {expected:.15}");
    passed &= (ratio - expected).abs() <= 1e-12 * expected;

    finish("9 bound algebra", started, 5.0, passed);
}

#[test]
fn criterion_10_empirical_vs_bound_sweep() {
    let started = Instant::now();
    let points: Vec<(ScenarioKind, usize, usize)> = [ScenarioKind::IidBounded, ScenarioKind::MarkovVolatility]
        .iter()
        .flat_map(|&kind| {
            [2usize, 8].iter().flat_map(move |&d| {
                [64usize, 256, 1024].iter().map(move |&n| (kind, d, n))
            })
        })
        .collect();
    let params = ScenarioParams {
        vol_strength: 0.6,
        ..Default::default()
    };
    let atoms = vec![F0Atom::new("w", 1.0).with_x0(0.5)];
    let settings = McSettings {
        replications_x: 5000,
        replications_y: 5000,
        mc_budget: 2000,
        base_seed: ACCEPTANCE_SEED,
        ..Default::default()
    };

    // Determinism: identical rows and identical CSV bytes regardless of the
    // thread count.
    let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let pool3 = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let rows = pool1.install(|| run_sweep(&points, &params, &atoms, &settings));
    let rows_mt = pool3.install(|| run_sweep(&points, &params, &atoms, &settings));
    let dir = tempfile::tempdir().unwrap();
    let path1 = dir.path().join("sweep1.csv");
    let path3 = dir.path().join("sweep3.csv");
    write_results(&path1, "sweep", &rows, false).unwrap();
    write_results(&path3, "sweep", &rows_mt, false).unwrap();
    let identical = std::fs::read(&path1).unwrap() == std::fs::read(&path3).unwrap();
    println!("  determinism across thread counts: {}", if identical { "ok" } else { "VIOLATED" });

    // All cells computed, implied constants finite.
    let mut finite_ok = true;
    for row in &rows {
        assert!(row.error.is_none(), "sweep cell failed: {:?}", row.error);
        finite_ok &= row.implied_c.map(f64::is_finite).unwrap_or(false);
    }
    println!("  implied constants finite: {}", if finite_ok { "ok" } else { "VIOLATED" });

    // Per (kind, d): empirical distance nonincreasing in n up to combined
    // bands; bound column nonincreasing in n.
    let mut dist_ok = true;
    let mut bound_ok = true;
    for &kind in &[ScenarioKind::IidBounded, ScenarioKind::MarkovVolatility] {
        for &d in &[2usize, 8] {
            let mut cells: Vec<_> = rows
                .iter()
                .filter(|r| r.kind == kind && r.d == d)
                .collect();
            cells.sort_by_key(|r| r.n);
            for pair in cells.windows(2) {
                let (small, large) = (pair[0], pair[1]);
                let dist_small = small.dist_emp.unwrap();
                let dist_large = large.dist_emp.unwrap();
                let bands = small.dist_band.unwrap() + large.dist_band.unwrap();
                if dist_large > dist_small + bands {
                    dist_ok = false;
                    println!(
                        "  distance rose beyond bands: {} d={d} n {} -> {}: {dist_small:.4} -> {dist_large:.4}",
                        kind.name(),
                        small.n,
                        large.n
                    );
                }
                let b_small = small.bound_theorem1.unwrap();
                let b_large = large.bound_theorem1.unwrap();
                if b_large > b_small {
                    bound_ok = false;
                    println!(
                        "  bound column rose: {} d={d} n {} -> {}: {b_small:.6} -> {b_large:.6}",
                        kind.name(),
                        small.n,
                        large.n
                    );
                }
            }
        }
    }
    println!("  empirical distance nonincreasing up to bands: {}", if dist_ok { "ok" } else { "VIOLATED" });
    println!("  bound column nonincreasing in n: {}", if bound_ok { "ok" } else { "VIOLATED" });

    finish(
        "10 empirical-vs-bound sweep",
        started,
        900.0,
        identical && finite_ok && dist_ok && bound_ok,
    );
}
