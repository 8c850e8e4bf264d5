//! Kolmogorov-distance bound evaluation: aggregate variance statistics,
//! the normalized ratios tau, beta', Gamma', and the bound formulas for
//! general dimension, the conditionally independent case, and d = 1.
//!
//! The universal constant is never specified by the theory; it enters every
//! formula as an explicit parameter (default 1) and empirical runs report
//! the implied constant instead of asserting absolute domination.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{lnp, CovMatrix};
use crate::martingale::AtomStatistics;

/// Absolute slack used by [`gamma_floor_check`] to absorb rounding.
pub const GAMMA_FLOOR_SLACK: f64 = 1e-12;

/// Diagonal extremes of `V = sum_i Sigma_i`.
#[derive(Debug, Clone)]
pub struct VarianceStats {
    pub v: CovMatrix,
    pub v_min_sq: f64,
    pub v_max_sq: f64,
    pub tau: f64,
}

/// Sum the per-step covariances and read off the diagonal extremes.
///
/// Fails when the diagonal of `V` is not strictly positive, which violates
/// the bound's standing assumption on the smallest coordinate variance.
pub fn variance_stats(sigma_list: &[CovMatrix]) -> Result<VarianceStats> {
    let first = sigma_list
        .first()
        .ok_or_else(|| Error::input("sigma list must be non-empty"))?;
    let mut v = first.clone();
    for sigma in &sigma_list[1..] {
        v = v.add(sigma)?;
    }
    let v_min_sq = v.min_diag();
    let v_max_sq = v.max_diag();
    if v_min_sq <= 0.0 {
        return Err(Error::Precondition(format!(
            "min_j V_jj = {v_min_sq} <= 0: the bound requires a strictly positive minimum variance"
        )));
    }
    Ok(VarianceStats {
        v,
        v_min_sq,
        v_max_sq,
        tau: (v_max_sq / v_min_sq).sqrt(),
    })
}

/// Raw ingredients of the bound formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub d: usize,
    pub n: usize,
    pub v_min_sq: f64,
    pub v_max_sq: f64,
    pub beta: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub constant: f64,
}

impl BoundInputs {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        d: usize,
        n: usize,
        v_min_sq: f64,
        v_max_sq: f64,
        beta: f64,
        gamma: f64,
        alpha: f64,
        constant: f64,
    ) -> Result<Self> {
        if d == 0 || n == 0 {
            return Err(Error::input("d and n must be positive"));
        }
        if !(v_min_sq > 0.0 && v_min_sq.is_finite()) {
            return Err(Error::Precondition(format!(
                "v_min_sq = {v_min_sq} must be strictly positive"
            )));
        }
        if !(v_max_sq >= v_min_sq && v_max_sq.is_finite()) {
            return Err(Error::input(format!(
                "v_max_sq = {v_max_sq} must be >= v_min_sq = {v_min_sq}"
            )));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::input(format!("beta must be nonnegative, got {beta}")));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::input(format!("gamma must be positive, got {gamma}")));
        }
        if !(0.0..=0.25).contains(&alpha) {
            return Err(Error::input(format!(
                "alpha must lie in [0, 1/4], got {alpha}"
            )));
        }
        if !(constant > 0.0 && constant.is_finite()) {
            return Err(Error::input(format!(
                "constant must be positive, got {constant}"
            )));
        }
        Ok(Self {
            d,
            n,
            v_min_sq,
            v_max_sq,
            beta,
            gamma,
            alpha,
            constant,
        })
    }

    /// Assemble inputs from per-atom statistics.
    pub fn from_stats(stats: &AtomStatistics, alpha: f64, constant: f64) -> Result<Self> {
        let vs = variance_stats(&stats.sigma_list())?;
        Self::new(
            stats.dim(),
            stats.steps(),
            vs.v_min_sq,
            vs.v_max_sq,
            stats.beta().value(),
            stats.gamma().value(),
            alpha,
            constant,
        )
    }

    pub fn tau(&self) -> f64 {
        (self.v_max_sq / self.v_min_sq).sqrt()
    }

    /// `beta' = beta / v_min^2`.
    pub fn beta_prime(&self) -> f64 {
        self.beta / self.v_min_sq
    }

    /// `Gamma' = Gamma / v_min^3`.
    pub fn gamma_prime(&self) -> f64 {
        self.gamma / (self.v_min_sq * self.v_min_sq.sqrt())
    }
}

/// The general bound
/// `C * [(ln d)^alpha * beta' * sqrt(tau / Gamma') + (ln(dn))^(1 - alpha/2) * (tau^3 Gamma')^(1/4)]`.
///
/// Requires `d >= 2`: at `d = 1` the leading logarithm vanishes and the
/// dedicated [`d1_bound`] applies instead.
pub fn theorem1_bound(inputs: &BoundInputs) -> Result<f64> {
    if inputs.d < 2 {
        return Err(Error::input(
            "the general bound requires d >= 2; use d1_bound for the scalar case",
        ));
    }
    let ln_d = (inputs.d as f64).ln();
    let ln_dn = ((inputs.d * inputs.n) as f64).ln();
    let tau = inputs.tau();
    let beta_prime = inputs.beta_prime();
    let gamma_prime = inputs.gamma_prime();
    let first = ln_d.powf(inputs.alpha) * beta_prime * (tau / gamma_prime).sqrt();
    let second = ln_dn.powf(1.0 - inputs.alpha / 2.0) * (tau.powi(3) * gamma_prime).powf(0.25);
    Ok(inputs.constant * (first + second))
}

/// The conditionally independent case: `C * (ln(dn))^(7/8) * (tau^3 Gamma')^(1/4)`.
///
/// Expects `beta = 0`; the caller is responsible for flagging a nonzero
/// `beta` to the user, since the formula ignores it.
pub fn corollary_bound(inputs: &BoundInputs) -> Result<f64> {
    if inputs.d < 2 {
        return Err(Error::input(
            "the corollary bound requires d >= 2; use d1_bound for the scalar case",
        ));
    }
    let ln_dn = ((inputs.d * inputs.n) as f64).ln();
    let tau = inputs.tau();
    let gamma_prime = inputs.gamma_prime();
    Ok(inputs.constant * ln_dn.powf(0.875) * (tau.powi(3) * gamma_prime).powf(0.25))
}

/// The scalar case: `C * [beta' / sqrt(Gamma') + Gamma'^(1/4)]`.
pub fn d1_bound(beta_prime: f64, gamma_prime: f64, constant: f64) -> Result<f64> {
    if !(gamma_prime > 0.0 && gamma_prime.is_finite()) {
        return Err(Error::input(format!(
            "gamma_prime must be positive, got {gamma_prime}"
        )));
    }
    if beta_prime.is_nan() || beta_prime < 0.0 {
        return Err(Error::input(format!(
            "beta_prime must be nonnegative, got {beta_prime}"
        )));
    }
    Ok(constant * (beta_prime / gamma_prime.sqrt() + gamma_prime.powf(0.25)))
}

/// The smoothing choice realizing the bound: the window width, the
/// log-sum-exp gap `delta = epsilon`, and the scale `kappa = ln(d) / delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingChoice {
    pub epsilon: f64,
    pub delta: f64,
    pub kappa: f64,
}

/// `epsilon = (ln d)^((1 - alpha)/2) * v_min * (Gamma'/tau)^(1/4)`, with
/// `delta = epsilon` and `kappa = ln(d) / delta`.
pub fn optimal_epsilon(inputs: &BoundInputs) -> Result<SmoothingChoice> {
    if inputs.d < 2 {
        return Err(Error::input(
            "the smoothing choice requires d >= 2 (ln d vanishes at d = 1)",
        ));
    }
    let ln_d = (inputs.d as f64).ln();
    let v_min = inputs.v_min_sq.sqrt();
    let epsilon =
        ln_d.powf((1.0 - inputs.alpha) / 2.0) * v_min * (inputs.gamma_prime() / inputs.tau()).powf(0.25);
    Ok(SmoothingChoice {
        epsilon,
        delta: epsilon,
        kappa: ln_d / epsilon,
    })
}

/// Check `Gamma >= (lnp d)^(3/2) * n^(-1/2) * v_max^3` (with absolute slack
/// for rounding). True for every schedule whose `Gamma` was assembled from
/// its own `sigma_bar` values; false signals an inconsistent input.
pub fn gamma_floor_check(gamma: f64, d: usize, n: usize, v_max_sq: f64) -> bool {
    let l = lnp(d as f64);
    let floor = l * l.sqrt() / (n as f64).sqrt() * v_max_sq * v_max_sq.sqrt();
    gamma >= floor - GAMMA_FLOOR_SLACK
}

/// Full per-atom bound report.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub tau: f64,
    pub beta_prime: f64,
    pub gamma_prime: f64,
    /// General bound; absent at d = 1.
    pub theorem1: Option<f64>,
    /// Conditionally-independent-case bound; absent at d = 1.
    pub corollary: Option<f64>,
    /// Scalar-case bound; present only at d = 1.
    pub d1: Option<f64>,
    /// Smoothing choice; absent at d = 1.
    pub smoothing: Option<SmoothingChoice>,
    pub gamma_floor_ok: bool,
}

impl BoundReport {
    /// The bound the empirical distance is compared against: the general
    /// bound for d >= 2, the scalar bound at d = 1.
    pub fn reference_bound(&self) -> Option<f64> {
        self.theorem1.or(self.d1)
    }
}

/// Evaluate every applicable bound for the given inputs.
pub fn evaluate_bounds(inputs: &BoundInputs) -> Result<BoundReport> {
    let (theorem1, corollary, smoothing, d1) = if inputs.d >= 2 {
        (
            Some(theorem1_bound(inputs)?),
            Some(corollary_bound(inputs)?),
            Some(optimal_epsilon(inputs)?),
            None,
        )
    } else {
        (
            None,
            None,
            None,
            Some(d1_bound(
                inputs.beta_prime(),
                inputs.gamma_prime(),
                inputs.constant,
            )?),
        )
    };
    Ok(BoundReport {
        tau: inputs.tau(),
        beta_prime: inputs.beta_prime(),
        gamma_prime: inputs.gamma_prime(),
        theorem1,
        corollary,
        d1,
        smoothing,
        gamma_floor_ok: gamma_floor_check(inputs.gamma, inputs.d, inputs.n, inputs.v_max_sq),
    })
}

/// Probability-weighted mean over atoms; a reporting convenience with no
/// counterpart in the theory (the bound itself is per atom).
pub fn probability_weighted_mean(values: &[(f64, f64)]) -> f64 {
    let total: f64 = values.iter().map(|(_, p)| p).sum();
    if total <= 0.0 {
        return f64::NAN;
    }
    values.iter().map(|(v, p)| v * p).sum::<f64>() / total
}
