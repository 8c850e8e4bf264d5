//! Martingale-difference scenario catalog with a discrete conditioning
//! partition, the coupled path sampler pairing each scenario with its
//! Gaussian analog, and the per-atom statistics beta and Gamma.
//!
//! Every scenario produces increments scaled by `n^(-1/2)` so the aggregate
//! covariance `V = sum_i Sigma_i` stays O(1) and decay in `n` is visible in
//! the bound values. The conditioning sigma-field is modeled as a finite
//! partition; all conditional quantities are computed per atom.
//!
//! Scenario kinds:
//!
//! * `iid_bounded` - `X_i = A xi_i / sqrt(n)` with i.i.d. Rademacher sign
//!   vectors `xi_i` and a fixed mixing matrix `A`. Trivial partition,
//!   `Sigma_i = A A^T / n` in closed form, `beta = 0` exactly.
//! * `cond_indep_gaussian_mixture` - given an atom with scale `s`, the
//!   increments are i.i.d. `s * L z / sqrt(n)` where `L` is the Cholesky
//!   root of an equicorrelated base matrix and `z` has independent
//!   coordinates drawn from a standard normal truncated at `R` in max norm
//!   and rescaled to unit variance. The truncation acts on the standard
//!   factor, so `Sigma_i = s^2 * base / n` stays exact; `beta = 0`.
//! * `markov_volatility` - `X_i = sqrt(h_i) A xi_i / sqrt(n)` with
//!   `h_i = 1 + a tanh(u^T X_{i-1})`, `|a| < 1`. The one-step conditional
//!   covariance `h_i A A^T / n` is closed form, but `Sigma_i` given the atom
//!   requires a nested Monte Carlo estimate of `m_i = E[h_i | atom]`;
//!   `beta > 0` generically.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{lnp, normal_cdf, normal_quantile, CovMatrix};
use crate::rng::SeedStream;

/// Minimum outer Monte Carlo budget for fields without a closed form.
pub const MIN_MC_BUDGET: usize = 256;
/// Exact sign-pattern enumeration cap for `E ||A xi||_inf^3`.
pub const ENUM_SIGN_CAP: usize = 12;
/// Atom probabilities must sum to one within this tolerance.
pub const ATOM_PROB_TOL: f64 = 1e-12;

/// The three scenario families of the catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    IidBounded,
    CondIndepGaussianMixture,
    MarkovVolatility,
}

impl ScenarioKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::IidBounded => "iid_bounded",
            ScenarioKind::CondIndepGaussianMixture => "cond_indep_gaussian_mixture",
            ScenarioKind::MarkovVolatility => "markov_volatility",
        }
    }
}

/// Kind-specific scenario parameters. Irrelevant fields keep their defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioParams {
    /// Diagonal value of the mixing matrix `A` (kinds `iid_bounded`,
    /// `markov_volatility`).
    pub a_diag: f64,
    /// Off-diagonal value of `A`.
    pub a_off: f64,
    /// Equicorrelation of the Gaussian mixture base matrix (kind
    /// `cond_indep_gaussian_mixture`), in `[0, 1)`.
    pub rho: f64,
    /// Max-norm truncation radius of the standard factor; `None` means
    /// untruncated (exact Gaussian increments).
    pub trunc_radius: Option<f64>,
    /// Volatility feedback strength `a`, `|a| < 1` (kind `markov_volatility`).
    pub vol_strength: f64,
    /// Scale of the feedback direction `u = vol_sensitivity * 1 / sqrt(d)`.
    pub vol_sensitivity: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            a_diag: 1.0,
            a_off: 0.0,
            rho: 0.0,
            trunc_radius: None,
            vol_strength: 0.0,
            vol_sensitivity: 1.0,
        }
    }
}

/// One cell of the conditioning partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F0Atom {
    pub label: String,
    pub prob: f64,
    /// Mixture scale `s` (kind `cond_indep_gaussian_mixture`).
    #[serde(default = "default_scale")]
    pub scale: f64,
    /// Initial state `X_0 = x0 * 1` (kind `markov_volatility`).
    #[serde(default)]
    pub x0: f64,
}

fn default_scale() -> f64 {
    1.0
}

impl F0Atom {
    pub fn new(label: impl Into<String>, prob: f64) -> Self {
        Self {
            label: label.into(),
            prob,
            scale: 1.0,
            x0: 0.0,
        }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_x0(mut self, x0: f64) -> Self {
        self.x0 = x0;
        self
    }
}

/// A validated martingale-difference scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    kind: ScenarioKind,
    d: usize,
    n: usize,
    params: ScenarioParams,
    atoms: Vec<F0Atom>,
}

impl ScenarioSpec {
    /// Validate and build a scenario. For `iid_bounded` the partition must
    /// be trivial (a single atom of probability one).
    pub fn new(
        kind: ScenarioKind,
        d: usize,
        n: usize,
        params: ScenarioParams,
        atoms: Vec<F0Atom>,
    ) -> Result<Self> {
        if d == 0 {
            return Err(Error::input("d must be positive"));
        }
        if n == 0 {
            return Err(Error::input("n must be positive"));
        }
        if atoms.is_empty() {
            return Err(Error::input("scenario needs at least one atom"));
        }
        let mut total = 0.0;
        for atom in &atoms {
            if !(atom.prob > 0.0 && atom.prob <= 1.0) {
                return Err(Error::input(format!(
                    "atom '{}' probability {} outside (0, 1]",
                    atom.label, atom.prob
                )));
            }
            total += atom.prob;
        }
        if (total - 1.0).abs() > ATOM_PROB_TOL {
            return Err(Error::input(format!(
                "atom probabilities sum to {total}, expected 1"
            )));
        }
        for i in 0..atoms.len() {
            for j in (i + 1)..atoms.len() {
                if atoms[i].label == atoms[j].label {
                    return Err(Error::input(format!(
                        "duplicate atom label '{}'",
                        atoms[i].label
                    )));
                }
            }
        }
        for f in [params.a_diag, params.a_off, params.vol_strength, params.vol_sensitivity] {
            if !f.is_finite() {
                return Err(Error::input("scenario parameters must be finite"));
            }
        }
        match kind {
            ScenarioKind::IidBounded => {
                if atoms.len() != 1 {
                    return Err(Error::input(
                        "iid_bounded has a trivial partition: exactly one atom",
                    ));
                }
            }
            ScenarioKind::CondIndepGaussianMixture => {
                if !(0.0..1.0).contains(&params.rho) {
                    return Err(Error::input(format!(
                        "rho must lie in [0, 1), got {}",
                        params.rho
                    )));
                }
                if let Some(r) = params.trunc_radius {
                    if !(r > 0.0 && r.is_finite()) {
                        return Err(Error::input(format!(
                            "trunc_radius must be positive, got {r}"
                        )));
                    }
                }
                for atom in &atoms {
                    if !(atom.scale > 0.0 && atom.scale.is_finite()) {
                        return Err(Error::input(format!(
                            "atom '{}' scale must be positive, got {}",
                            atom.label, atom.scale
                        )));
                    }
                }
            }
            ScenarioKind::MarkovVolatility => {
                if params.vol_strength.abs() >= 1.0 {
                    return Err(Error::input(format!(
                        "vol_strength must satisfy |a| < 1, got {}",
                        params.vol_strength
                    )));
                }
            }
        }
        let spec = Self {
            kind,
            d,
            n,
            params,
            atoms,
        };
        if matches!(
            kind,
            ScenarioKind::IidBounded | ScenarioKind::MarkovVolatility
        ) {
            let gram = spec.gram();
            if (0..d).map(|j| gram[(j, j)]).fold(f64::INFINITY, f64::min) <= 0.0 {
                return Err(Error::input(
                    "mixing matrix A has a zero row: covariance diagonal must be positive",
                ));
            }
        }
        Ok(spec)
    }

    pub fn kind(&self) -> ScenarioKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn steps(&self) -> usize {
        self.n
    }

    pub fn params(&self) -> &ScenarioParams {
        &self.params
    }

    pub fn atoms(&self) -> &[F0Atom] {
        &self.atoms
    }

    pub fn atom(&self, index: usize) -> Result<&F0Atom> {
        self.atoms
            .get(index)
            .ok_or_else(|| Error::input(format!("atom index {index} out of range")))
    }

    /// The mixing matrix `A = a_off * J + (a_diag - a_off) * I`.
    pub fn mixing_matrix(&self) -> DMatrix<f64> {
        let ScenarioParams { a_diag, a_off, .. } = self.params;
        DMatrix::from_fn(self.d, self.d, |i, j| if i == j { a_diag } else { a_off })
    }

    /// The per-step covariance root (before the `1/sqrt(n)` and per-step
    /// scale factors): `A` for the Rademacher kinds, `s * chol(base)` for
    /// the Gaussian mixture.
    fn step_root(&self, atom: &F0Atom) -> Result<DMatrix<f64>> {
        match self.kind {
            ScenarioKind::IidBounded | ScenarioKind::MarkovVolatility => Ok(self.mixing_matrix()),
            ScenarioKind::CondIndepGaussianMixture => {
                let base = CovMatrix::equicorrelated(self.d, self.params.rho)?;
                let root = base
                    .matrix()
                    .clone()
                    .cholesky()
                    .ok_or_else(|| Error::input("equicorrelated base is not PSD"))?
                    .unpack();
                Ok(root * atom.scale)
            }
        }
    }

    /// The gram matrix `R R^T` of the step root for the Rademacher kinds.
    fn gram(&self) -> DMatrix<f64> {
        let a = self.mixing_matrix();
        &a * a.transpose()
    }

    /// Volatility feedback direction `u = vol_sensitivity * 1 / sqrt(d)`.
    fn u_vector(&self) -> DVector<f64> {
        DVector::from_element(self.d, self.params.vol_sensitivity / (self.d as f64).sqrt())
    }

    /// `u^T X_0` for the volatility recursion at the given atom.
    fn initial_feedback(&self, atom: &F0Atom) -> f64 {
        self.params.vol_sensitivity * atom.x0 * (self.d as f64).sqrt()
    }

    /// Exact or Monte Carlo value of `E ||A xi||_inf^3` over Rademacher
    /// sign vectors.
    fn rademacher_third_moment(
        &self,
        stream: &SeedStream,
        mc_budget: usize,
    ) -> Result<Estimate> {
        let a = self.mixing_matrix();
        if self.d <= ENUM_SIGN_CAP {
            let mut sum = 0.0;
            let patterns = 1usize << self.d;
            let mut xi = DVector::zeros(self.d);
            for mask in 0..patterns {
                for j in 0..self.d {
                    xi[j] = if mask >> j & 1 == 1 { 1.0 } else { -1.0 };
                }
                let row = &a * &xi;
                let norm = row.iter().fold(0.0_f64, |acc, &x| acc.max(x.abs()));
                sum += norm * norm * norm;
            }
            Ok(Estimate::Analytic(sum / patterns as f64))
        } else {
            if mc_budget < MIN_MC_BUDGET {
                return Err(Error::InsufficientBudget {
                    what: "E ||A xi||^3 beyond the enumeration cap",
                    min: MIN_MC_BUDGET,
                    got: mc_budget,
                });
            }
            let mut rng = stream.rng();
            let mut xi = DVector::zeros(self.d);
            let (mut sum, mut sum_sq) = (0.0, 0.0);
            for _ in 0..mc_budget {
                for j in 0..self.d {
                    xi[j] = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                }
                let row = &a * &xi;
                let norm = row.iter().fold(0.0_f64, |acc, &x| acc.max(x.abs()));
                let v = norm * norm * norm;
                sum += v;
                sum_sq += v * v;
            }
            let b = mc_budget as f64;
            let mean = sum / b;
            let var = (sum_sq / b - mean * mean).max(0.0) * b / (b - 1.0);
            Ok(Estimate::MonteCarlo {
                value: mean,
                std_error: (var / b).sqrt(),
            })
        }
    }
}

/// Coordinatewise truncation of the standard normal factor at radius `r`,
/// rescaled back to unit variance.
#[derive(Debug, Clone, Copy)]
struct Truncation {
    cdf_lo: f64,
    cdf_width: f64,
    unit_scale: f64,
}

impl Truncation {
    fn new(radius: f64) -> Self {
        let hi = normal_cdf(radius);
        let lo = normal_cdf(-radius);
        let phi = (-0.5 * radius * radius).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mass = hi - lo;
        // Variance of the symmetric truncated standard normal.
        let var = 1.0 - 2.0 * radius * phi / mass;
        Self {
            cdf_lo: lo,
            cdf_width: mass,
            unit_scale: 1.0 / var.sqrt(),
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.gen();
        normal_quantile(self.cdf_lo + u * self.cdf_width) * self.unit_scale
    }
}

/// A point estimate together with its provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Estimate {
    Analytic(f64),
    MonteCarlo { value: f64, std_error: f64 },
}

impl Estimate {
    pub fn value(&self) -> f64 {
        match *self {
            Estimate::Analytic(v) => v,
            Estimate::MonteCarlo { value, .. } => value,
        }
    }

    pub fn std_error(&self) -> f64 {
        match *self {
            Estimate::Analytic(_) => 0.0,
            Estimate::MonteCarlo { std_error, .. } => std_error,
        }
    }

    pub fn is_analytic(&self) -> bool {
        matches!(self, Estimate::Analytic(_))
    }
}

/// Per-step covariance schedule `Sigma_i = cov_scale_i * (root root^T)`.
#[derive(Debug, Clone)]
pub struct SigmaSchedule {
    root: DMatrix<f64>,
    gram: DMatrix<f64>,
    cov_scales: Vec<f64>,
    scale_ses: Vec<f64>,
    analytic: bool,
}

impl SigmaSchedule {
    fn new(root: DMatrix<f64>, cov_scales: Vec<f64>, scale_ses: Vec<f64>, analytic: bool) -> Self {
        let gram = &root * root.transpose();
        Self {
            root,
            gram,
            cov_scales,
            scale_ses,
            analytic,
        }
    }

    pub fn len(&self) -> usize {
        self.cov_scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cov_scales.is_empty()
    }

    pub fn is_analytic(&self) -> bool {
        self.analytic
    }

    pub fn root(&self) -> &DMatrix<f64> {
        &self.root
    }

    pub fn cov_scale(&self, i: usize) -> f64 {
        self.cov_scales[i]
    }

    pub fn scale_std_error(&self, i: usize) -> f64 {
        self.scale_ses[i]
    }

    /// `Sigma_i` materialized as a covariance matrix.
    pub fn step_cov(&self, i: usize) -> CovMatrix {
        CovMatrix::new(&self.gram * self.cov_scales[i]).expect("schedule gram is symmetric")
    }

    /// All `Sigma_i` in step order.
    pub fn sigma_list(&self) -> Vec<CovMatrix> {
        (0..self.len()).map(|i| self.step_cov(i)).collect()
    }

    /// `sigma_bar_i^2 = max_j [Sigma_i]_jj`.
    pub fn sigma_bar_sq(&self, i: usize) -> f64 {
        self.cov_scales[i] * self.gram_max_diag()
    }

    /// `V = sum_i Sigma_i`.
    pub fn v_matrix(&self) -> CovMatrix {
        let total: f64 = self.cov_scales.iter().sum();
        CovMatrix::new(&self.gram * total).expect("schedule gram is symmetric")
    }

    /// Largest diagonal entry of the gram matrix `root root^T`.
    pub fn gram_max_diag(&self) -> f64 {
        (0..self.gram.nrows())
            .map(|j| self.gram[(j, j)])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Element-wise 1-norm of the gram matrix (sum of absolute entries).
    pub fn gram_e1_norm(&self) -> f64 {
        self.gram.iter().map(|e| e.abs()).sum()
    }
}

/// One realization of the coupled pair of paths.
#[derive(Debug, Clone)]
pub struct CoupledPath {
    pub x_steps: DMatrix<f64>,
    pub y_steps: DMatrix<f64>,
    pub s: DVector<f64>,
    pub t: DVector<f64>,
    pub max_s: f64,
    pub max_t: f64,
}

fn column_sums(steps: &DMatrix<f64>) -> DVector<f64> {
    let (n, d) = steps.shape();
    let mut out = DVector::zeros(d);
    for i in 0..n {
        for j in 0..d {
            out[j] += steps[(i, j)];
        }
    }
    out
}

fn vec_max(v: &DVector<f64>) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

enum XKernel {
    Rademacher {
        mix: DMatrix<f64>,
    },
    TruncGauss {
        root: DMatrix<f64>,
        trunc: Option<Truncation>,
    },
    Volatility {
        mix: DMatrix<f64>,
        u: DVector<f64>,
        strength: f64,
        initial_feedback: f64,
    },
}

/// Samples coupled `(X, Y)` paths for one atom of a scenario. `Y_i` is an
/// independent Gaussian refresh with the schedule covariance `Sigma_i`, so
/// the sum `T` is conditionally `N(0, V)` given the atom.
pub struct CoupledSampler {
    d: usize,
    n: usize,
    x_kernel: XKernel,
    inv_sqrt_n: f64,
    y_root: DMatrix<f64>,
    y_step_scales: Vec<f64>,
}

impl CoupledSampler {
    pub fn new(
        scenario: &ScenarioSpec,
        atom_index: usize,
        schedule: &SigmaSchedule,
    ) -> Result<Self> {
        let atom = scenario.atom(atom_index)?;
        if schedule.len() != scenario.steps() {
            return Err(Error::DimensionMismatch {
                expected: scenario.steps(),
                got: schedule.len(),
            });
        }
        let n = scenario.steps();
        let inv_sqrt_n = 1.0 / (n as f64).sqrt();
        let x_kernel = match scenario.kind() {
            ScenarioKind::IidBounded => XKernel::Rademacher {
                mix: scenario.mixing_matrix(),
            },
            ScenarioKind::CondIndepGaussianMixture => XKernel::TruncGauss {
                root: scenario.step_root(atom)? * inv_sqrt_n,
                trunc: scenario.params().trunc_radius.map(Truncation::new),
            },
            ScenarioKind::MarkovVolatility => XKernel::Volatility {
                mix: scenario.mixing_matrix(),
                u: scenario.u_vector(),
                strength: scenario.params().vol_strength,
                initial_feedback: scenario.initial_feedback(atom),
            },
        };
        Ok(Self {
            d: scenario.dim(),
            n,
            x_kernel,
            inv_sqrt_n,
            y_root: schedule.root().clone(),
            y_step_scales: (0..n).map(|i| schedule.cov_scale(i).sqrt()).collect(),
        })
    }

    /// Sample the X path into an `n x d` matrix.
    pub fn sample_x_steps<R: Rng>(&self, rng: &mut R) -> DMatrix<f64> {
        let mut steps = DMatrix::zeros(self.n, self.d);
        let mut xi = DVector::zeros(self.d);
        match &self.x_kernel {
            XKernel::Rademacher { mix } => {
                for i in 0..self.n {
                    for j in 0..self.d {
                        xi[j] = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                    }
                    let row = mix * &xi * self.inv_sqrt_n;
                    for j in 0..self.d {
                        steps[(i, j)] = row[j];
                    }
                }
            }
            XKernel::TruncGauss { root, trunc } => {
                for i in 0..self.n {
                    for j in 0..self.d {
                        xi[j] = match trunc {
                            Some(t) => t.sample(rng),
                            None => rng.sample::<f64, _>(StandardNormal),
                        };
                    }
                    let row = root * &xi;
                    for j in 0..self.d {
                        steps[(i, j)] = row[j];
                    }
                }
            }
            XKernel::Volatility {
                mix,
                u,
                strength,
                initial_feedback,
            } => {
                let mut feedback = *initial_feedback;
                for i in 0..self.n {
                    let h = 1.0 + strength * feedback.tanh();
                    let scale = h.sqrt() * self.inv_sqrt_n;
                    for j in 0..self.d {
                        xi[j] = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                    }
                    let row = mix * &xi * scale;
                    feedback = 0.0;
                    for j in 0..self.d {
                        steps[(i, j)] = row[j];
                        feedback += u[j] * row[j];
                    }
                }
            }
        }
        steps
    }

    /// Sample the Gaussian analog path into an `n x d` matrix.
    pub fn sample_y_steps<R: Rng>(&self, rng: &mut R) -> DMatrix<f64> {
        let mut steps = DMatrix::zeros(self.n, self.d);
        let mut z = DVector::zeros(self.d);
        for i in 0..self.n {
            for j in 0..self.d {
                z[j] = rng.sample::<f64, _>(StandardNormal);
            }
            let row = &self.y_root * &z * self.y_step_scales[i];
            for j in 0..self.d {
                steps[(i, j)] = row[j];
            }
        }
        steps
    }

    /// One coupled realization with sums and maxima filled in.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> CoupledPath {
        let x_steps = self.sample_x_steps(rng);
        let y_steps = self.sample_y_steps(rng);
        let s = column_sums(&x_steps);
        let t = column_sums(&y_steps);
        let max_s = vec_max(&s);
        let max_t = vec_max(&t);
        CoupledPath {
            x_steps,
            y_steps,
            s,
            t,
            max_s,
            max_t,
        }
    }

    /// The sum `S` of a fresh X path, without materializing the steps.
    pub fn sample_s<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        column_sums(&self.sample_x_steps(rng))
    }
}

/// Convenience wrapper drawing one coupled path on the given stream.
pub fn sample_coupled_path(
    scenario: &ScenarioSpec,
    atom_index: usize,
    schedule: &SigmaSchedule,
    stream: &SeedStream,
) -> Result<CoupledPath> {
    let sampler = CoupledSampler::new(scenario, atom_index, schedule)?;
    Ok(sampler.sample(&mut stream.rng()))
}

/// Volatility recursion record from one batch of outer histories.
struct VolHistories {
    mean_h: Vec<f64>,
    se_h: Vec<f64>,
    /// Mean and SE of the per-history totals `sum_i h_i^{3/2}`.
    h32_total_mean: f64,
    h32_total_se: f64,
}

fn run_vol_histories(
    scenario: &ScenarioSpec,
    atom: &F0Atom,
    stream: &SeedStream,
    histories: usize,
) -> VolHistories {
    let n = scenario.steps();
    let d = scenario.dim();
    let mix = scenario.mixing_matrix();
    let u = scenario.u_vector();
    let strength = scenario.params().vol_strength;
    let inv_sqrt_n = 1.0 / (n as f64).sqrt();
    let mut rng = stream.rng();

    let mut sum_h = vec![0.0; n];
    let mut sum_h_sq = vec![0.0; n];
    let mut sum_tot = 0.0;
    let mut sum_tot_sq = 0.0;
    let mut xi = DVector::zeros(d);
    for _ in 0..histories {
        let mut feedback = scenario.initial_feedback(atom);
        let mut tot = 0.0;
        for i in 0..n {
            let h = 1.0 + strength * feedback.tanh();
            sum_h[i] += h;
            sum_h_sq[i] += h * h;
            tot += h * h.sqrt();
            let scale = h.sqrt() * inv_sqrt_n;
            for j in 0..d {
                xi[j] = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            }
            let row = &mix * &xi * scale;
            feedback = u.dot(&row);
        }
        sum_tot += tot;
        sum_tot_sq += tot * tot;
    }
    let b = histories as f64;
    let mut mean_h = vec![0.0; n];
    let mut se_h = vec![0.0; n];
    for i in 0..n {
        mean_h[i] = sum_h[i] / b;
        let var = (sum_h_sq[i] / b - mean_h[i] * mean_h[i]).max(0.0) * b / (b - 1.0);
        se_h[i] = (var / b).sqrt();
    }
    let tot_mean = sum_tot / b;
    let tot_var = (sum_tot_sq / b - tot_mean * tot_mean).max(0.0) * b / (b - 1.0);
    VolHistories {
        mean_h,
        se_h,
        h32_total_mean: tot_mean,
        h32_total_se: (tot_var / b).sqrt(),
    }
}

/// Estimate `beta` for the volatility kind: outer histories with the inner
/// one-step conditional covariance in closed form. The step deviations are
/// measured against the plug-in means `m_hat` from an independent batch.
fn estimate_vol_beta(
    scenario: &ScenarioSpec,
    atom: &F0Atom,
    m_hat: &[f64],
    gram_e1: f64,
    stream: &SeedStream,
    histories: usize,
) -> Estimate {
    let n = scenario.steps();
    let d = scenario.dim();
    let mix = scenario.mixing_matrix();
    let u = scenario.u_vector();
    let strength = scenario.params().vol_strength;
    let inv_sqrt_n = 1.0 / (n as f64).sqrt();
    let mut rng = stream.rng();

    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut xi = DVector::zeros(d);
    for _ in 0..histories {
        let mut feedback = scenario.initial_feedback(atom);
        let mut dev = 0.0;
        for m in m_hat.iter().take(n) {
            let h = 1.0 + strength * feedback.tanh();
            dev += (h - m).abs();
            let scale = h.sqrt() * inv_sqrt_n;
            for j in 0..d {
                xi[j] = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            }
            let row = &mix * &xi * scale;
            feedback = u.dot(&row);
        }
        // || h_i A A^T / n - m_i A A^T / n ||_{e,1} summed over steps.
        let val = dev * gram_e1 / n as f64;
        sum += val;
        sum_sq += val * val;
    }
    let b = histories as f64;
    let mean = sum / b;
    let var = (sum_sq / b - mean * mean).max(0.0) * b / (b - 1.0);
    Estimate::MonteCarlo {
        value: mean,
        std_error: (var / b).sqrt(),
    }
}

/// Per-atom statistics feeding the bound evaluators.
#[derive(Debug, Clone)]
pub struct AtomStatistics {
    atom_index: usize,
    atom_label: String,
    atom_prob: f64,
    d: usize,
    n: usize,
    schedule: SigmaSchedule,
    third_moments: Vec<Estimate>,
    beta: Estimate,
    gamma: Estimate,
}

impl AtomStatistics {
    pub fn atom_index(&self) -> usize {
        self.atom_index
    }

    pub fn atom_label(&self) -> &str {
        &self.atom_label
    }

    pub fn atom_prob(&self) -> f64 {
        self.atom_prob
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn steps(&self) -> usize {
        self.n
    }

    pub fn schedule(&self) -> &SigmaSchedule {
        &self.schedule
    }

    pub fn sigma_list(&self) -> Vec<CovMatrix> {
        self.schedule.sigma_list()
    }

    pub fn sigma_bar_sq(&self, i: usize) -> f64 {
        self.schedule.sigma_bar_sq(i)
    }

    pub fn third_moments(&self) -> &[Estimate] {
        &self.third_moments
    }

    pub fn beta(&self) -> Estimate {
        self.beta
    }

    pub fn gamma(&self) -> Estimate {
        self.gamma
    }

    /// `V = sum_i Sigma_i`.
    pub fn v_matrix(&self) -> CovMatrix {
        self.schedule.v_matrix()
    }
}

/// Compute `Sigma_i`, `sigma_bar_i^2`, conditional third moments, `beta`,
/// and `Gamma` for one atom.
///
/// `mc_budget` is the outer history count used wherever a field has no
/// closed form (at least [`MIN_MC_BUDGET`] in that case). Monte Carlo
/// standard errors are propagated conservatively: contributions sharing a
/// batch are summed linearly, independent batches in quadrature.
pub fn compute_atom_statistics(
    scenario: &ScenarioSpec,
    atom_index: usize,
    stream: &SeedStream,
    mc_budget: usize,
) -> Result<AtomStatistics> {
    let atom = scenario.atom(atom_index)?.clone();
    let d = scenario.dim();
    let n = scenario.steps();
    let lnp_d = lnp(d as f64);
    let n_f = n as f64;
    let n_pow_32 = n_f * n_f.sqrt();

    let (schedule, third_moments, beta): (SigmaSchedule, Vec<Estimate>, Estimate) = match scenario
        .kind()
    {
        ScenarioKind::IidBounded => {
            let root = scenario.mixing_matrix();
            let schedule =
                SigmaSchedule::new(root, vec![1.0 / n_f; n], vec![0.0; n], true);
            let q3 = scenario.rademacher_third_moment(&stream.child(1), mc_budget)?;
            let step = match q3 {
                Estimate::Analytic(v) => Estimate::Analytic(v / n_pow_32),
                Estimate::MonteCarlo { value, std_error } => Estimate::MonteCarlo {
                    value: value / n_pow_32,
                    std_error: std_error / n_pow_32,
                },
            };
            (schedule, vec![step; n], Estimate::Analytic(0.0))
        }
        ScenarioKind::CondIndepGaussianMixture => {
            let root = scenario.step_root(&atom)?;
            let schedule = SigmaSchedule::new(root, vec![1.0 / n_f; n], vec![0.0; n], true);
            if mc_budget < MIN_MC_BUDGET {
                return Err(Error::InsufficientBudget {
                    what: "mixture third moments",
                    min: MIN_MC_BUDGET,
                    got: mc_budget,
                });
            }
            let trunc = scenario.params().trunc_radius.map(Truncation::new);
            let step_root = schedule.root().clone() / n_f.sqrt();
            let mut rng = stream.child(1).rng();
            let mut z = DVector::zeros(d);
            let (mut sum, mut sum_sq) = (0.0, 0.0);
            for _ in 0..mc_budget {
                for j in 0..d {
                    z[j] = match &trunc {
                        Some(t) => t.sample(&mut rng),
                        None => rng.sample::<f64, _>(StandardNormal),
                    };
                }
                let row = &step_root * &z;
                let norm = row.iter().fold(0.0_f64, |acc, &x| acc.max(x.abs()));
                let v = norm * norm * norm;
                sum += v;
                sum_sq += v * v;
            }
            let b = mc_budget as f64;
            let mean = sum / b;
            let var = (sum_sq / b - mean * mean).max(0.0) * b / (b - 1.0);
            let step = Estimate::MonteCarlo {
                value: mean,
                std_error: (var / b).sqrt(),
            };
            (schedule, vec![step; n], Estimate::Analytic(0.0))
        }
        ScenarioKind::MarkovVolatility => {
            if mc_budget < MIN_MC_BUDGET {
                return Err(Error::InsufficientBudget {
                    what: "volatility conditional covariances",
                    min: MIN_MC_BUDGET,
                    got: mc_budget,
                });
            }
            let hist = run_vol_histories(scenario, &atom, &stream.child(0), mc_budget);
            let root = scenario.mixing_matrix();
            let cov_scales: Vec<f64> = hist.mean_h.iter().map(|m| m / n_f).collect();
            let scale_ses: Vec<f64> = hist.se_h.iter().map(|s| s / n_f).collect();
            let schedule = SigmaSchedule::new(root, cov_scales, scale_ses, false);
            let q3 = scenario.rademacher_third_moment(&stream.child(1), mc_budget)?;

            // Per-step third moments: E[h^{3/2}] * q3 / n^{3/2}. The
            // per-step SE reuses the h mean SE through the delta method.
            let steps: Vec<Estimate> = (0..n)
                .map(|i| {
                    let m = hist.mean_h[i];
                    let value = m * m.sqrt() * q3.value() / n_pow_32;
                    let dh = 1.5 * m.sqrt() * q3.value() / n_pow_32 * hist.se_h[i];
                    let dq = m * m.sqrt() / n_pow_32 * q3.std_error();
                    Estimate::MonteCarlo {
                        value,
                        std_error: (dh * dh + dq * dq).sqrt(),
                    }
                })
                .collect();

            let beta = estimate_vol_beta(
                scenario,
                &atom,
                &hist.mean_h,
                schedule.gram_e1_norm(),
                &stream.child(2),
                mc_budget,
            );

            // Gamma assembled below from the history batch; stash the batch
            // totals on the schedule side through the closure variables.
            let stats = assemble_vol_stats(
                scenario,
                atom_index,
                &atom,
                schedule,
                steps,
                beta,
                &hist,
                q3,
                lnp_d,
                n_pow_32,
            );
            return Ok(stats);
        }
    };

    // Analytic-schedule kinds: Gamma = sum_i (t3_i + (sigma_bar_i^2 lnp d)^{3/2}).
    let nonlinear: f64 = (0..n)
        .map(|i| {
            let s = schedule.sigma_bar_sq(i) * lnp_d;
            s * s.sqrt()
        })
        .sum();
    let t3_total: f64 = third_moments.iter().map(|e| e.value()).sum();
    // The per-step third moment is one shared estimate; errors add linearly.
    let t3_se: f64 = third_moments.iter().map(|e| e.std_error()).sum();
    let gamma = if t3_se == 0.0 {
        Estimate::Analytic(t3_total + nonlinear)
    } else {
        Estimate::MonteCarlo {
            value: t3_total + nonlinear,
            std_error: t3_se,
        }
    };

    Ok(AtomStatistics {
        atom_index,
        atom_label: atom.label.clone(),
        atom_prob: atom.prob,
        d,
        n,
        schedule,
        third_moments,
        beta,
        gamma,
    })
}

#[allow(clippy::too_many_arguments)]
fn assemble_vol_stats(
    scenario: &ScenarioSpec,
    atom_index: usize,
    atom: &F0Atom,
    schedule: SigmaSchedule,
    third_moments: Vec<Estimate>,
    beta: Estimate,
    hist: &VolHistories,
    q3: Estimate,
    lnp_d: f64,
    n_pow_32: f64,
) -> AtomStatistics {
    let n = scenario.steps();
    // Third-moment total from the per-history path sums (exact SE), scaled
    // by the sign-pattern factor.
    let t3_value = hist.h32_total_mean * q3.value() / n_pow_32;
    let t3_se = ((hist.h32_total_se * q3.value()).powi(2)
        + (hist.h32_total_mean * q3.std_error()).powi(2))
    .sqrt()
        / n_pow_32;

    // Nonlinear part sum_i (sigma_bar_i^2 lnp d)^{3/2} with a linear-sum
    // delta-method SE (the h_i share histories, so correlations can be
    // arbitrary; the linear sum is a valid upper bound).
    let mut nonlinear = 0.0;
    let mut nonlinear_se = 0.0;
    for i in 0..n {
        let sbar = schedule.sigma_bar_sq(i) * lnp_d;
        nonlinear += sbar * sbar.sqrt();
        let dsigma = schedule.scale_std_error(i) * schedule.gram_max_diag() * lnp_d;
        nonlinear_se += 1.5 * sbar.sqrt() * dsigma;
    }
    let gamma = Estimate::MonteCarlo {
        value: t3_value + nonlinear,
        std_error: t3_se + nonlinear_se,
    };
    AtomStatistics {
        atom_index,
        atom_label: atom.label.clone(),
        atom_prob: atom.prob,
        d: scenario.dim(),
        n,
        schedule,
        third_moments,
        beta,
        gamma,
    }
}

/// Build the covariance schedule for one atom without the full statistics
/// (nested Monte Carlo for the volatility kind).
pub fn compute_sigma_schedule(
    scenario: &ScenarioSpec,
    atom_index: usize,
    stream: &SeedStream,
    mc_budget: usize,
) -> Result<SigmaSchedule> {
    let atom = scenario.atom(atom_index)?;
    let n = scenario.steps();
    let n_f = n as f64;
    match scenario.kind() {
        ScenarioKind::IidBounded => Ok(SigmaSchedule::new(
            scenario.mixing_matrix(),
            vec![1.0 / n_f; n],
            vec![0.0; n],
            true,
        )),
        ScenarioKind::CondIndepGaussianMixture => Ok(SigmaSchedule::new(
            scenario.step_root(atom)?,
            vec![1.0 / n_f; n],
            vec![0.0; n],
            true,
        )),
        ScenarioKind::MarkovVolatility => {
            if mc_budget < MIN_MC_BUDGET {
                return Err(Error::InsufficientBudget {
                    what: "volatility conditional covariances",
                    min: MIN_MC_BUDGET,
                    got: mc_budget,
                });
            }
            let hist = run_vol_histories(scenario, atom, &stream.child(0), mc_budget);
            Ok(SigmaSchedule::new(
                scenario.mixing_matrix(),
                hist.mean_h.iter().map(|m| m / n_f).collect(),
                hist.se_h.iter().map(|s| s / n_f).collect(),
                false,
            ))
        }
    }
}

/// Draw `reps` realizations of step `index` conditional on one freshly
/// sampled history prefix (used by the martingale property checks).
pub fn sample_step_conditional(
    scenario: &ScenarioSpec,
    atom_index: usize,
    index: usize,
    reps: usize,
    stream: &SeedStream,
) -> Result<DMatrix<f64>> {
    if index >= scenario.steps() {
        return Err(Error::input(format!(
            "step index {index} out of range for n = {}",
            scenario.steps()
        )));
    }
    let atom = scenario.atom(atom_index)?;
    let d = scenario.dim();
    let n_f = scenario.steps() as f64;
    let inv_sqrt_n = 1.0 / n_f.sqrt();
    let mut prefix_rng = stream.child(0).rng();
    let mut rng = stream.child(1).rng();
    let mut out = DMatrix::zeros(reps, d);

    match scenario.kind() {
        ScenarioKind::IidBounded | ScenarioKind::CondIndepGaussianMixture => {
            // Steps are independent of the past; the prefix is irrelevant.
            let schedule = compute_sigma_schedule(scenario, atom_index, stream, 0)?;
            let sampler = CoupledSampler::new(scenario, atom_index, &schedule)?;
            for r in 0..reps {
                let steps = sampler.sample_x_steps(&mut rng);
                for j in 0..d {
                    out[(r, j)] = steps[(index, j)];
                }
            }
            // Touch the prefix stream so both kinds consume it.
            let _: u64 = prefix_rng.gen();
        }
        ScenarioKind::MarkovVolatility => {
            let mix = scenario.mixing_matrix();
            let u = scenario.u_vector();
            let strength = scenario.params().vol_strength;
            // One prefix fixes h at the target step.
            let mut feedback = scenario.initial_feedback(atom);
            let mut xi = DVector::zeros(d);
            for _ in 0..index {
                let h = 1.0 + strength * feedback.tanh();
                let scale = h.sqrt() * inv_sqrt_n;
                for j in 0..d {
                    xi[j] = if prefix_rng.gen::<bool>() { 1.0 } else { -1.0 };
                }
                let row = &mix * &xi * scale;
                feedback = u.dot(&row);
            }
            let h = 1.0 + strength * feedback.tanh();
            let scale = h.sqrt() * inv_sqrt_n;
            for r in 0..reps {
                for j in 0..d {
                    xi[j] = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                }
                let row = &mix * &xi * scale;
                for j in 0..d {
                    out[(r, j)] = row[j];
                }
            }
        }
    }
    Ok(out)
}
