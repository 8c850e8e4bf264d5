//! Property tests for the module invariants that hold on all inputs, not
//! just the seeded suites: the sandwich inequality, translation
//! equivariance, exactness of the two-sample statistic, band scaling, and
//! bound-value scale invariance.

use proptest::prelude::*;

use martmax::bounds::{corollary_bound, d1_bound, theorem1_bound, BoundInputs};
use martmax::gaussian::{estimate_levy_concentration, CovMatrix};
use martmax::harness::{dkw_halfwidth, two_sample_ks_distance};
use martmax::smooth_max::{
    hard_max, smooth_max, smooth_step, softmax_weights, SmoothMaxParams, SmoothStepSpec,
};
use martmax::SeedStream;

fn finite_vec(max_len: usize, bound: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-bound..bound, 1..max_len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn sandwich_holds_everywhere(
        x in finite_vec(200, 1e3),
        kappa in 0.1_f64..100.0,
    ) {
        let params = SmoothMaxParams::new(kappa).unwrap();
        let g = smooth_max(&x, &params).unwrap();
        let m = hard_max(&x);
        prop_assert!(g >= m - 1e-12);
        prop_assert!(g - m <= (x.len() as f64).ln() / kappa + 1e-12);
    }

    #[test]
    fn translation_equivariance(
        x in finite_vec(50, 100.0),
        shift in -50.0_f64..50.0,
        kappa in 0.1_f64..10.0,
    ) {
        let params = SmoothMaxParams::new(kappa).unwrap();
        let base = smooth_max(&x, &params).unwrap();
        let shifted: Vec<f64> = x.iter().map(|v| v + shift).collect();
        let moved = smooth_max(&shifted, &params).unwrap();
        prop_assert!((moved - base - shift).abs() <= 1e-9);

        let w0 = softmax_weights(&x, &params).unwrap();
        let w1 = softmax_weights(&shifted, &params).unwrap();
        for (a, b) in w0.iter().zip(&w1) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn smooth_step_shape(
        xs in prop::collection::vec(-1.0_f64..2.0, 2..40),
        eps in 0.05_f64..5.0,
    ) {
        let spec = SmoothStepSpec::new(eps).unwrap();
        let mut sorted = xs.clone();
        sorted.sort_by(f64::total_cmp);
        let mut last = f64::INFINITY;
        for &x in &sorted {
            let f = smooth_step(x * eps, &spec, 0).unwrap();
            prop_assert!((0.0..=1.0).contains(&f));
            prop_assert!(f <= last + 1e-15);
            last = f;
        }
    }

    #[test]
    fn two_sample_statistic_is_exact(
        xs in prop::collection::vec(-8i32..8, 1..200),
        ys in prop::collection::vec(-8i32..8, 1..200),
    ) {
        // Integer-derived samples force heavy ties.
        let xs: Vec<f64> = xs.iter().map(|&v| v as f64 / 2.0).collect();
        let ys: Vec<f64> = ys.iter().map(|&v| v as f64 / 2.0).collect();
        let fast = two_sample_ks_distance(&xs, &ys).unwrap();
        let ecdf = |s: &[f64], r: f64| {
            s.iter().filter(|&&v| v <= r).count() as f64 / s.len() as f64
        };
        let mut slow = 0.0_f64;
        for &r in xs.iter().chain(ys.iter()) {
            slow = slow.max((ecdf(&xs, r) - ecdf(&ys, r)).abs());
        }
        prop_assert!((fast - slow).abs() <= 1e-12);
    }

    #[test]
    fn dkw_scaling(reps in 1usize..100_000, delta in 0.001_f64..0.5) {
        let h = dkw_halfwidth(reps, delta).unwrap();
        let h4 = dkw_halfwidth(4 * reps, delta).unwrap();
        prop_assert!((h4 - h / 2.0).abs() <= 1e-12 * h.max(1.0));
        // Wider confidence (larger delta) gives a narrower band.
        let h_loose = dkw_halfwidth(reps, (delta * 1.5).min(0.9)).unwrap();
        prop_assert!(h_loose <= h + 1e-15);
    }

    #[test]
    fn bound_values_are_scale_free(
        v_min_sq in 0.01_f64..10.0,
        spread in 1.0_f64..5.0,
        beta in 0.0_f64..3.0,
        gamma in 0.01_f64..10.0,
        alpha in 0.0_f64..0.25,
        scale in 0.01_f64..100.0,
    ) {
        let base = BoundInputs::new(6, 64, v_min_sq, v_min_sq * spread, beta, gamma, alpha, 1.0)
            .unwrap();
        let s2 = scale * scale;
        let scaled = BoundInputs::new(
            6,
            64,
            s2 * v_min_sq,
            s2 * v_min_sq * spread,
            s2 * beta,
            s2 * scale * gamma,
            alpha,
            1.0,
        )
        .unwrap();
        let t0 = theorem1_bound(&base).unwrap();
        let t1 = theorem1_bound(&scaled).unwrap();
        prop_assert!((t0 - t1).abs() <= 1e-11 * t0.abs().max(1e-300));
        let c0 = corollary_bound(&base).unwrap();
        let c1 = corollary_bound(&scaled).unwrap();
        prop_assert!((c0 - c1).abs() <= 1e-11 * c0.abs().max(1e-300));
        let d0 = d1_bound(base.beta_prime(), base.gamma_prime(), 1.0).unwrap();
        let d1v = d1_bound(scaled.beta_prime(), scaled.gamma_prime(), 1.0).unwrap();
        prop_assert!((d0 - d1v).abs() <= 1e-11 * d0.abs().max(1e-300));
    }
}

proptest! {
    // The concentration estimator resamples per case; keep the count low.
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn levy_estimate_monotone_in_window(seed in 0u64..1000, eps in 0.01_f64..1.0) {
        let cov = CovMatrix::identity(3);
        let stream = SeedStream::new(seed);
        let (small, _) = estimate_levy_concentration(&cov, eps, &stream, 400).unwrap();
        let (large, _) = estimate_levy_concentration(&cov, 2.0 * eps, &stream, 400).unwrap();
        prop_assert!((0.0..=1.0).contains(&small));
        prop_assert!(large >= small, "same sample, wider window: {small} vs {large}");
    }
}
