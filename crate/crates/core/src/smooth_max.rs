//! Log-sum-exp smooth maximum, its directional derivatives up to third
//! order, and the C^3 step function used to smooth indicator functions.
//!
//! The smooth maximum `G(x) = ln(sum_j exp(k*x_j)) / k` over-approximates the
//! hard maximum `M(x)` by at most `ln(d)/k`. All exponential sums are
//! evaluated in max-shifted coordinates, so no finite input can overflow.
//! Derivatives are evaluated in O(d) through weighted moments of the softmax
//! distribution; the explicit O(d^2)/O(d^3) coefficient tables are kept as a
//! small-dimension oracle for tests.

use crate::error::{Error, Result};

/// Default dimension cap for the O(d^3) explicit coefficient tables.
pub const DEFAULT_COEFF_CAP: usize = 8;

/// Upper bound on `|f^(j)(x)| * eps^j` for the degree-7 step function of
/// [`smooth_step`], j = 1..3. The third derivative attains it at the
/// midpoint: |S'''(1/2)| = 52.5; the first and second derivatives peak at
/// 2.1875 and 420/(25*sqrt(5)) ~ 7.513.
pub const SMOOTH_STEP_DERIV_BOUND: f64 = 52.5;

/// Smoothing scale for the log-sum-exp maximum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothMaxParams {
    kappa: f64,
}

impl SmoothMaxParams {
    pub fn new(kappa: f64) -> Result<Self> {
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(Error::input(format!(
                "kappa must be positive and finite, got {kappa}"
            )));
        }
        Ok(Self { kappa })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }
}

/// Transition width of the C^3 step function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothStepSpec {
    epsilon: f64,
}

impl SmoothStepSpec {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::input(format!(
                "epsilon must be positive and finite, got {epsilon}"
            )));
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

fn check_vector(name: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::input(format!("{name} must be non-empty")));
    }
    if let Some(bad) = v.iter().find(|e| !e.is_finite()) {
        return Err(Error::input(format!(
            "{name} contains non-finite entry {bad}"
        )));
    }
    Ok(())
}

fn check_same_len(d: usize, v: &[f64]) -> Result<()> {
    if v.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: v.len(),
        });
    }
    Ok(())
}

/// Hard maximum `M(x) = max_j x_j`.
pub fn hard_max(x: &[f64]) -> f64 {
    x.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Smooth maximum `G(x) = ln(sum_j exp(k*x_j)) / k`, max-shifted.
///
/// Satisfies `M(x) <= G(x) <= M(x) + ln(d)/k` up to rounding for every
/// finite input.
pub fn smooth_max(x: &[f64], params: &SmoothMaxParams) -> Result<f64> {
    check_vector("x", x)?;
    let k = params.kappa;
    let m = hard_max(x);
    let sum: f64 = x.iter().map(|&xi| (k * (xi - m)).exp()).sum();
    Ok(m + sum.ln() / k)
}

/// Softmax weights `w_i = exp(k*v_i) / sum_j exp(k*v_j)`, max-shifted.
///
/// Entries are positive and sum to 1 up to rounding; adding a constant to
/// every coordinate of `v` leaves the weights unchanged.
pub fn softmax_weights(v: &[f64], params: &SmoothMaxParams) -> Result<Vec<f64>> {
    check_vector("v", v)?;
    let k = params.kappa;
    let m = hard_max(v);
    let mut w: Vec<f64> = v.iter().map(|&vi| (k * (vi - m)).exp()).collect();
    let total: f64 = w.iter().sum();
    for wi in &mut w {
        *wi /= total;
    }
    Ok(w)
}

fn weighted_mean(w: &[f64], u: &[f64]) -> f64 {
    w.iter().zip(u).map(|(&wi, &ui)| wi * ui).sum()
}

/// First directional derivative `G'(v)(x)`: the softmax mean of `x`.
pub fn directional_d1(v: &[f64], x: &[f64], params: &SmoothMaxParams) -> Result<f64> {
    let w = softmax_weights(v, params)?;
    check_same_len(v.len(), x)?;
    Ok(weighted_mean(&w, x))
}

/// Second directional derivative `G''(v)(x, y)`: `k * Cov_w(x, y)`.
pub fn directional_d2(v: &[f64], x: &[f64], y: &[f64], params: &SmoothMaxParams) -> Result<f64> {
    let w = softmax_weights(v, params)?;
    check_same_len(v.len(), x)?;
    check_same_len(v.len(), y)?;
    let (mut exy, mut ex, mut ey) = (0.0, 0.0, 0.0);
    for i in 0..v.len() {
        exy += w[i] * x[i] * y[i];
        ex += w[i] * x[i];
        ey += w[i] * y[i];
    }
    Ok(params.kappa * (exy - ex * ey))
}

/// Third directional derivative `G'''(v)(x, y, z)` via the third weighted
/// cumulant:
/// `k^2 * (E[xyz] - E[x]E[yz] - E[y]E[xz] - E[z]E[xy] + 2 E[x]E[y]E[z])`,
/// expectations under the softmax weights.
pub fn directional_d3(
    v: &[f64],
    x: &[f64],
    y: &[f64],
    z: &[f64],
    params: &SmoothMaxParams,
) -> Result<f64> {
    let w = softmax_weights(v, params)?;
    check_same_len(v.len(), x)?;
    check_same_len(v.len(), y)?;
    check_same_len(v.len(), z)?;
    let (mut exyz, mut exy, mut exz, mut eyz, mut ex, mut ey, mut ez) =
        (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..v.len() {
        let (wi, xi, yi, zi) = (w[i], x[i], y[i], z[i]);
        exyz += wi * xi * yi * zi;
        exy += wi * xi * yi;
        exz += wi * xi * zi;
        eyz += wi * yi * zi;
        ex += wi * xi;
        ey += wi * yi;
        ez += wi * zi;
    }
    let k = params.kappa;
    Ok(k * k * (exyz - ex * eyz - ey * exz - ez * exy + 2.0 * ex * ey * ez))
}

/// Explicit derivative coefficient tables `b_ij` and `c_ijk`, evaluated in
/// max-shifted coordinates (both the stored exponentials and `p` refer to
/// `v - max(v)`; every identity involving them is homogeneous, so shifted
/// evaluation is exact for the checks below).
#[derive(Debug, Clone)]
pub struct ExplicitCoefficients {
    d: usize,
    kappa: f64,
    /// exp(k * (v_i - m))
    exps: Vec<f64>,
    /// p = sum of `exps`
    p: f64,
    /// b[i*d + j]
    b: Vec<f64>,
    /// c[(i*d + j)*d + k]
    c: Vec<f64>,
}

/// Build the explicit coefficient tables with the default dimension cap.
pub fn explicit_coefficients(v: &[f64], params: &SmoothMaxParams) -> Result<ExplicitCoefficients> {
    explicit_coefficients_with_cap(v, params, DEFAULT_COEFF_CAP)
}

/// Build the explicit coefficient tables, refusing dimensions above `cap`.
pub fn explicit_coefficients_with_cap(
    v: &[f64],
    params: &SmoothMaxParams,
    cap: usize,
) -> Result<ExplicitCoefficients> {
    check_vector("v", v)?;
    let d = v.len();
    if d > cap {
        return Err(Error::DimensionCap { dim: d, cap });
    }
    let k = params.kappa;
    let m = hard_max(v);
    let exps: Vec<f64> = v.iter().map(|&vi| (k * (vi - m)).exp()).collect();
    let p: f64 = exps.iter().sum();

    let mut b = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            b[i * d + j] = if i == j { p - exps[i] } else { -exps[j] };
        }
    }
    let mut c = vec![0.0; d * d * d];
    for i in 0..d {
        for j in 0..d {
            for kk in 0..d {
                let idx = (i * d + j) * d + kk;
                c[idx] = if i == j || j == kk {
                    b[i * d + kk] * (p - 2.0 * exps[j])
                } else if i == kk {
                    b[i * d + j] * (p - 2.0 * exps[kk])
                } else {
                    2.0 * b[i * d + j] * b[i * d + kk]
                };
            }
        }
    }
    Ok(ExplicitCoefficients {
        d,
        kappa: k,
        exps,
        p,
        b,
        c,
    })
}

impl ExplicitCoefficients {
    pub fn dim(&self) -> usize {
        self.d
    }

    /// `p(v - m)`, the shifted exponential sum.
    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn b(&self, i: usize, j: usize) -> f64 {
        self.b[i * self.d + j]
    }

    pub fn c(&self, i: usize, j: usize, k: usize) -> f64 {
        self.c[(i * self.d + j) * self.d + k]
    }

    /// `G''(v)(x, y)` assembled from the explicit double sum.
    #[allow(clippy::needless_range_loop)]
    pub fn second_directional(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_same_len(self.d, x)?;
        check_same_len(self.d, y)?;
        let mut sum = 0.0;
        for i in 0..self.d {
            for j in 0..self.d {
                sum += self.exps[i] * self.b(i, j) * x[i] * y[j];
            }
        }
        Ok(self.kappa * sum / (self.p * self.p))
    }

    /// `G'''(v)(x, y, z)` assembled from the explicit triple sum.
    #[allow(clippy::needless_range_loop)]
    pub fn third_directional(&self, x: &[f64], y: &[f64], z: &[f64]) -> Result<f64> {
        check_same_len(self.d, x)?;
        check_same_len(self.d, y)?;
        check_same_len(self.d, z)?;
        let mut sum = 0.0;
        for i in 0..self.d {
            for j in 0..self.d {
                for k in 0..self.d {
                    sum += self.exps[i] * self.c(i, j, k) * x[i] * y[j] * z[k];
                }
            }
        }
        Ok(self.kappa * self.kappa * sum / (self.p * self.p * self.p))
    }

    /// `sum_{ij} exp(k v_i) |b_ij|`, shifted coordinates.
    pub fn weighted_b_abs_sum(&self) -> f64 {
        let mut sum = 0.0;
        for i in 0..self.d {
            for j in 0..self.d {
                sum += self.exps[i] * self.b(i, j).abs();
            }
        }
        sum
    }

    /// `sum_{ijk} exp(k v_i) |c_ijk|`, shifted coordinates.
    pub fn weighted_c_abs_sum(&self) -> f64 {
        let mut sum = 0.0;
        for i in 0..self.d {
            for j in 0..self.d {
                for k in 0..self.d {
                    sum += self.exps[i] * self.c(i, j, k).abs();
                }
            }
        }
        sum
    }
}

/// The reversed degree-7 polynomial step and its first three derivatives.
///
/// `f(x) = 1` for `x <= 0`, `f(x) = 0` for `x >= eps`, and in between
/// `f(x) = 1 - (35t^4 - 84t^5 + 70t^6 - 20t^7)` with `t = x/eps`. `f` is
/// nonincreasing and three times continuously differentiable, with
/// `|f^(j)(x)| <= D * eps^-j` on `(0, eps)` for
/// `D = ` [`SMOOTH_STEP_DERIV_BOUND`].
pub fn smooth_step(x: f64, spec: &SmoothStepSpec, order: u8) -> Result<f64> {
    if order > 3 {
        return Err(Error::input(format!("derivative order {order} > 3")));
    }
    if !x.is_finite() {
        return Err(Error::input(format!("x must be finite, got {x}")));
    }
    let eps = spec.epsilon;
    if x <= 0.0 {
        return Ok(if order == 0 { 1.0 } else { 0.0 });
    }
    if x >= eps {
        return Ok(0.0);
    }
    let t = x / eps;
    let value = match order {
        // 1 - t^4 (35 - 84 t + 70 t^2 - 20 t^3)
        0 => 1.0 - t * t * t * t * (35.0 - t * (84.0 - t * (70.0 - 20.0 * t))),
        // -140 t^3 (1-t)^3 / eps
        1 => {
            let u = 1.0 - t;
            -140.0 * t * t * t * u * u * u / eps
        }
        // -420 t^2 (1-t)^2 (1-2t) / eps^2
        2 => {
            let u = 1.0 - t;
            -420.0 * t * t * u * u * (1.0 - 2.0 * t) / (eps * eps)
        }
        // -840 t (1 - 6t + 10t^2 - 5t^3) / eps^3
        _ => -840.0 * t * (1.0 - t * (6.0 - t * (10.0 - 5.0 * t))) / (eps * eps * eps),
    };
    Ok(value)
}

/// Smoothed level indicator `f(G(s) - r)`: equals 1 whenever
/// `M(s) <= r - ln(d)/k` and 0 whenever `M(s) >= r + eps`.
pub fn smoothed_indicator(
    s: &[f64],
    r: f64,
    params: &SmoothMaxParams,
    spec: &SmoothStepSpec,
) -> Result<f64> {
    if !r.is_finite() {
        return Err(Error::input(format!("r must be finite, got {r}")));
    }
    let g = smooth_max(s, params)?;
    smooth_step(g - r, spec, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn params(kappa: f64) -> SmoothMaxParams {
        SmoothMaxParams::new(kappa).unwrap()
    }

    #[test]
    fn all_equal_hits_upper_sandwich_edge() {
        // All-equal coordinates make G = M + ln(d)/k exactly.
        let g = smooth_max(&[0.0; 4], &params(1.0)).unwrap();
        assert_relative_eq!(g, 4.0_f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn singleton_is_identity() {
        for k in [0.1, 1.0, 7.0] {
            assert_eq!(smooth_max(&[5.0], &params(k)).unwrap(), 5.0);
        }
    }

    #[test]
    fn two_point_value() {
        let g = smooth_max(&[0.0, 1.0], &params(1.0)).unwrap();
        assert_relative_eq!(g, 1.3132616875182228, epsilon = 1e-14);
    }

    #[test]
    fn no_overflow_for_huge_entries() {
        let g = smooth_max(&[1e300, -1e300, 500.0], &params(100.0)).unwrap();
        assert_eq!(g, 1e300);
        let w = softmax_weights(&[1e4, 0.0], &params(10.0)).unwrap();
        assert_eq!(w[0], 1.0);
        assert_eq!(w[1], 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(SmoothMaxParams::new(0.0).is_err());
        assert!(SmoothMaxParams::new(-1.0).is_err());
        assert!(SmoothMaxParams::new(f64::NAN).is_err());
        assert!(smooth_max(&[], &params(1.0)).is_err());
        assert!(smooth_max(&[1.0, f64::INFINITY], &params(1.0)).is_err());
        assert!(matches!(
            directional_d1(&[0.0, 0.0], &[1.0], &params(1.0)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn softmax_examples() {
        let w = softmax_weights(&[0.0, 0.0], &params(3.0)).unwrap();
        assert_relative_eq!(w[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(w[1], 0.5, epsilon = 1e-15);

        let w = softmax_weights(&[0.0, 1.0], &params(1.0)).unwrap();
        assert_relative_eq!(w[0], 0.2689414213699951, epsilon = 1e-13);
        assert_relative_eq!(w[1], 0.7310585786300049, epsilon = 1e-13);

        let w = softmax_weights(&[40.0, 0.0, 0.0], &params(1.0)).unwrap();
        assert!(w[1] < 1e-17 && w[2] < 1e-17);
        assert!((w[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn d1_uniform_weights_is_mean() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let g = directional_d1(&[0.0; 4], &x, &params(2.0)).unwrap();
        assert_relative_eq!(g, 2.5, epsilon = 1e-14);
    }

    #[test]
    fn d2_diagonal_is_nonnegative() {
        let mut rng = crate::rng::SeedStream::new(11).rng();
        let p = params(3.0);
        for _ in 0..200 {
            let d = rng.gen_range(1..6);
            let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
            assert!(directional_d2(&v, &x, &x, &p).unwrap() >= -1e-12);
        }
    }

    #[test]
    fn factored_matches_explicit_tables() {
        let mut rng = crate::rng::SeedStream::new(5).rng();
        let p = params(2.0);
        for _ in 0..100 {
            let d = rng.gen_range(1..7);
            let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let z: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let coeffs = explicit_coefficients(&v, &p).unwrap();
            let d2 = directional_d2(&v, &x, &y, &p).unwrap();
            let d3 = directional_d3(&v, &x, &y, &z, &p).unwrap();
            let d2e = coeffs.second_directional(&x, &y).unwrap();
            let d3e = coeffs.third_directional(&x, &y, &z).unwrap();
            assert_relative_eq!(d2, d2e, epsilon = 1e-12, max_relative = 1e-10);
            assert_relative_eq!(d3, d3e, epsilon = 1e-12, max_relative = 1e-10);
        }
    }

    #[test]
    fn explicit_coefficient_examples() {
        // d = 1: the only entries are zero.
        let c1 = explicit_coefficients(&[0.3], &params(1.0)).unwrap();
        assert_eq!(c1.b(0, 0), 0.0);
        assert_eq!(c1.c(0, 0, 0), 0.0);

        // d = 2, v = (0,0), k = 1: p = 2, b = [[1,-1],[-1,1]].
        let c2 = explicit_coefficients(&[0.0, 0.0], &params(1.0)).unwrap();
        assert_eq!(c2.p(), 2.0);
        assert_eq!(c2.b(0, 0), 1.0);
        assert_eq!(c2.b(0, 1), -1.0);
        assert_eq!(c2.b(1, 0), -1.0);
        assert_eq!(c2.b(1, 1), 1.0);
    }

    #[test]
    fn coefficient_cap_is_enforced() {
        let v = vec![0.0; 9];
        match explicit_coefficients(&v, &params(1.0)) {
            Err(Error::DimensionCap { dim: 9, cap: 8 }) => {}
            other => panic!("expected cap refusal, got {other:?}"),
        }
        assert!(explicit_coefficients_with_cap(&v, &params(1.0), 9).is_ok());
    }

    #[test]
    fn coefficient_sums_within_bounds() {
        let mut rng = crate::rng::SeedStream::new(17).rng();
        let p = params(1.5);
        for _ in 0..200 {
            let d = rng.gen_range(1..6);
            let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let coeffs = explicit_coefficients(&v, &p).unwrap();
            let pp = coeffs.p();
            assert!(coeffs.weighted_b_abs_sum() <= 2.0 * pp * pp * (1.0 + 1e-12));
            assert!(coeffs.weighted_c_abs_sum() <= 6.0 * pp * pp * pp * (1.0 + 1e-12));
        }
    }

    #[test]
    fn smooth_step_plateaus_and_midpoint() {
        let spec = SmoothStepSpec::new(0.5).unwrap();
        assert_eq!(smooth_step(-1.0, &spec, 0).unwrap(), 1.0);
        assert_eq!(smooth_step(10.0, &spec, 0).unwrap(), 0.0);
        assert_relative_eq!(smooth_step(0.25, &spec, 0).unwrap(), 0.5, epsilon = 1e-14);
        for order in 1..=3 {
            assert_eq!(smooth_step(-0.1, &spec, order).unwrap(), 0.0);
            assert_eq!(smooth_step(0.6, &spec, order).unwrap(), 0.0);
        }
        assert!(SmoothStepSpec::new(0.0).is_err());
        assert!(smooth_step(0.1, &spec, 4).is_err());
    }

    #[test]
    fn smooth_step_derivatives_match_finite_differences() {
        let spec = SmoothStepSpec::new(1.0).unwrap();
        let h = 1e-5;
        for &x in &[0.1, 0.3, 0.5, 0.7, 0.9] {
            for order in 1..=3u8 {
                let lo = smooth_step(x - h, &spec, order - 1).unwrap();
                let hi = smooth_step(x + h, &spec, order - 1).unwrap();
                let fd = (hi - lo) / (2.0 * h);
                let exact = smooth_step(x, &spec, order).unwrap();
                assert_relative_eq!(fd, exact, epsilon = 1e-5, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn smooth_step_is_nonincreasing() {
        let spec = SmoothStepSpec::new(1.0).unwrap();
        let mut last = 1.0;
        for i in 0..=1000 {
            let x = i as f64 / 1000.0;
            let f = smooth_step(x, &spec, 0).unwrap();
            assert!(f <= last + 1e-15);
            assert!((0.0..=1.0).contains(&f));
            last = f;
        }
    }

    #[test]
    fn smoothed_indicator_plateaus() {
        let p = params(1.0);
        let spec = SmoothStepSpec::new(0.1).unwrap();
        // M(s) = r - 10 with d = 2: G <= M + ln 2 < r.
        let r = 0.0;
        assert_eq!(
            smoothed_indicator(&[-10.0, -12.0], r, &p, &spec).unwrap(),
            1.0
        );
        // M(s) = r + 10: G >= M >= r + eps.
        assert_eq!(
            smoothed_indicator(&[10.0, 3.0], r, &p, &spec).unwrap(),
            0.0
        );
        // Exactly at the left plateau boundary: G(0,0) = ln 2 = r.
        let spec1 = SmoothStepSpec::new(1.0).unwrap();
        let v = smoothed_indicator(&[0.0, 0.0], 2.0_f64.ln(), &p, &spec1).unwrap();
        assert_relative_eq!(v, 1.0, epsilon = 1e-12);
    }
}
