//! Monte Carlo estimation of the conditional Kolmogorov distance between
//! the maximum of a martingale sum and its Gaussian analog, the smoothed
//! distance diagnostic, and deterministic grid sweeps.
//!
//! Replications parallelize over disjoint seed streams and aggregation is
//! order-independent, so sweep output is bit-identical for any thread count.

use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{evaluate_bounds, BoundInputs, BoundReport};
use crate::error::{Error, Result};
use crate::gaussian::GaussianSampler;
use crate::martingale::{
    compute_atom_statistics, AtomStatistics, CoupledSampler, F0Atom, ScenarioKind,
    ScenarioParams, ScenarioSpec,
};
use crate::rng::SeedStream;
use crate::smooth_max::{smooth_max, smooth_step, SmoothMaxParams, SmoothStepSpec};

/// Minimum replications per sample for distance estimation.
pub const MIN_KS_REPLICATIONS: usize = 1000;
/// Default confidence parameter of the distribution-free band.
pub const DEFAULT_BAND_DELTA: f64 = 0.01;

/// Distribution-free confidence halfwidth `sqrt(ln(2/delta) / (2 n))`.
pub fn dkw_halfwidth(replications: usize, delta: f64) -> Result<f64> {
    if replications == 0 {
        return Err(Error::input("replications must be positive"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::input(format!(
            "confidence parameter delta must lie in (0, 1), got {delta}"
        )));
    }
    Ok(((2.0 / delta).ln() / (2.0 * replications as f64)).sqrt())
}

/// Exact two-sample Kolmogorov-Smirnov distance: the supremum over all
/// thresholds of the gap between the two empirical cdfs, attained on the
/// merged order statistics.
pub fn two_sample_ks_distance(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::input("samples must be non-empty"));
    }
    let mut a: Vec<f64> = xs.to_vec();
    let mut b: Vec<f64> = ys.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (m, k) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut stat = 0.0_f64;
    while i < a.len() || j < b.len() {
        let v = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => break,
        };
        while i < a.len() && a[i] == v {
            i += 1;
        }
        while j < b.len() && b[j] == v {
            j += 1;
        }
        stat = stat.max((i as f64 / m - j as f64 / k).abs());
    }
    Ok(stat)
}

/// One-sample Kolmogorov-Smirnov distance of a sample against a continuous
/// cdf.
pub fn one_sample_ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::input("sample must be non-empty"));
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut stat = 0.0_f64;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        stat = stat.max((f - i as f64 / n).abs());
        stat = stat.max(((i + 1) as f64 / n - f).abs());
    }
    Ok(stat)
}

/// How the Gaussian-analog maxima are sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TSamplingMode {
    /// Directly as maxima of `N(0, V)` draws (default; cheaper for large n).
    #[default]
    Direct,
    /// From the `t` components of coupled paths (cross-validation mode).
    Coupled,
}

/// Empirical conditional Kolmogorov distance for one atom.
#[derive(Debug, Clone, PartialEq)]
pub struct KolmogorovEstimate {
    pub atom_label: String,
    /// Exact two-sample sup distance between the empirical cdfs.
    pub distance: f64,
    /// Sum of the two per-sample distribution-free halfwidths.
    pub band_halfwidth: f64,
    pub replications_x: usize,
    pub replications_y: usize,
}

fn check_reps(what: &'static str, reps: usize) -> Result<()> {
    if reps < MIN_KS_REPLICATIONS {
        return Err(Error::InsufficientReplications {
            what,
            min: MIN_KS_REPLICATIONS,
            got: reps,
        });
    }
    Ok(())
}

/// Estimate the conditional Kolmogorov distance between `M(S)` and `M(T)`
/// for one atom by the exact two-sample statistic on Monte Carlo samples.
#[allow(clippy::too_many_arguments)]
pub fn estimate_kolmogorov(
    scenario: &ScenarioSpec,
    atom_index: usize,
    stats: &AtomStatistics,
    stream: &SeedStream,
    reps_x: usize,
    reps_y: usize,
    mode: TSamplingMode,
    band_delta: f64,
) -> Result<KolmogorovEstimate> {
    check_reps("estimate_kolmogorov (x sample)", reps_x)?;
    check_reps("estimate_kolmogorov (y sample)", reps_y)?;
    let v = stats.v_matrix();
    if v.min_diag() <= 0.0 {
        return Err(Error::Precondition(
            "V has a nonpositive diagonal entry; the Gaussian analog is degenerate".into(),
        ));
    }
    let sampler = CoupledSampler::new(scenario, atom_index, stats.schedule())?;

    let mut rng_x = stream.child(0).rng();
    let mut max_s = Vec::with_capacity(reps_x);
    for _ in 0..reps_x {
        let s = sampler.sample_s(&mut rng_x);
        max_s.push(s.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }

    let mut rng_y = stream.child(1).rng();
    let mut max_t = Vec::with_capacity(reps_y);
    match mode {
        TSamplingMode::Direct => {
            let total: f64 = (0..stats.schedule().len())
                .map(|i| stats.schedule().cov_scale(i))
                .sum();
            let root = stats.schedule().root() * total.sqrt();
            let g = GaussianSampler::from_root(root);
            let mut row = DVector::zeros(scenario.dim());
            for _ in 0..reps_y {
                g.sample_into(&mut rng_y, &mut row);
                max_t.push(row.iter().copied().fold(f64::NEG_INFINITY, f64::max));
            }
        }
        TSamplingMode::Coupled => {
            for _ in 0..reps_y {
                let path = sampler.sample(&mut rng_y);
                max_t.push(path.max_t);
            }
        }
    }

    let distance = two_sample_ks_distance(&max_s, &max_t)?;
    let band_halfwidth = dkw_halfwidth(reps_x, band_delta)? + dkw_halfwidth(reps_y, band_delta)?;
    Ok(KolmogorovEstimate {
        atom_label: stats.atom_label().to_string(),
        distance,
        band_halfwidth,
        replications_x: reps_x,
        replications_y: reps_y,
    })
}

/// Smoothed distance diagnostic: the supremum over a threshold grid of the
/// gap between the smoothed-indicator means of the two samples, evaluated at
/// the smoothing choice realizing the bound. Requires `d >= 2`. The grid
/// spans the pooled smooth-max range padded by `epsilon + delta` with step
/// `epsilon / 4`; the value is a diagnostic, not a certified estimator.
pub fn smoothed_distance_diagnostic(
    scenario: &ScenarioSpec,
    atom_index: usize,
    stats: &AtomStatistics,
    stream: &SeedStream,
    reps: usize,
    alpha: f64,
) -> Result<f64> {
    check_reps("smoothed_distance_diagnostic", reps)?;
    let inputs = BoundInputs::from_stats(stats, alpha, 1.0)?;
    let smoothing = crate::bounds::optimal_epsilon(&inputs)?;
    let params = SmoothMaxParams::new(smoothing.kappa)?;
    let spec = SmoothStepSpec::new(smoothing.epsilon)?;

    let sampler = CoupledSampler::new(scenario, atom_index, stats.schedule())?;
    let mut rng_x = stream.child(0).rng();
    let mut g_x = Vec::with_capacity(reps);
    for _ in 0..reps {
        let s = sampler.sample_s(&mut rng_x);
        g_x.push(smooth_max(s.as_slice(), &params)?);
    }
    let total: f64 = (0..stats.schedule().len())
        .map(|i| stats.schedule().cov_scale(i))
        .sum();
    let g = GaussianSampler::from_root(stats.schedule().root() * total.sqrt());
    let mut rng_y = stream.child(1).rng();
    let mut g_t = Vec::with_capacity(reps);
    let mut row = DVector::zeros(scenario.dim());
    for _ in 0..reps {
        g.sample_into(&mut rng_y, &mut row);
        g_t.push(smooth_max(row.as_slice(), &params)?);
    }

    let pad = smoothing.epsilon + smoothing.delta;
    let lo = g_x
        .iter()
        .chain(g_t.iter())
        .copied()
        .fold(f64::INFINITY, f64::min)
        - pad;
    let hi = g_x
        .iter()
        .chain(g_t.iter())
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
        + pad;
    let step = smoothing.epsilon / 4.0;
    let count = ((hi - lo) / step).ceil() as usize + 1;

    let mean_g = |g_vals: &[f64], r: f64| -> f64 {
        let sum: f64 = g_vals
            .iter()
            .map(|&gv| smooth_step(gv - r, &spec, 0).expect("order 0 on finite input"))
            .sum();
        sum / g_vals.len() as f64
    };
    let mut sup = 0.0_f64;
    for idx in 0..count {
        let r = lo + idx as f64 * step;
        sup = sup.max((mean_g(&g_x, r) - mean_g(&g_t, r)).abs());
    }
    Ok(sup)
}

/// Monte Carlo and bound-evaluation settings shared by single runs and
/// sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSettings {
    pub replications_x: usize,
    pub replications_y: usize,
    /// Outer budget for nested Monte Carlo statistics.
    pub mc_budget: usize,
    pub base_seed: u64,
    pub band_delta: f64,
    pub mode: TSamplingMode,
    pub alpha: f64,
    pub constant: f64,
    /// When false (the default) the runtime column stays empty so output is
    /// bit-identical across runs; timing goes to stderr instead.
    pub record_runtime: bool,
}

impl Default for McSettings {
    fn default() -> Self {
        Self {
            replications_x: 5000,
            replications_y: 5000,
            mc_budget: 2000,
            base_seed: 0,
            band_delta: DEFAULT_BAND_DELTA,
            mode: TSamplingMode::Direct,
            alpha: 0.0,
            constant: 1.0,
            record_runtime: false,
        }
    }
}

/// One output row of a sweep: a grid point, one atom, statistics, bounds,
/// and the empirical distance. Failed cells carry an error message instead.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub kind: ScenarioKind,
    pub d: usize,
    pub n: usize,
    pub atom_label: String,
    pub atom_prob: Option<f64>,
    pub v_min: Option<f64>,
    pub v_max: Option<f64>,
    pub tau: Option<f64>,
    pub beta: Option<f64>,
    pub beta_se: Option<f64>,
    pub gamma: Option<f64>,
    pub gamma_se: Option<f64>,
    pub gamma_floor_ok: Option<bool>,
    pub alpha: f64,
    pub constant: f64,
    pub bound_theorem1: Option<f64>,
    pub bound_corollary: Option<f64>,
    pub bound_d1: Option<f64>,
    pub epsilon_opt: Option<f64>,
    pub kappa: Option<f64>,
    pub dist_emp: Option<f64>,
    pub dist_band: Option<f64>,
    pub implied_c: Option<f64>,
    pub reps_x: Option<usize>,
    pub reps_y: Option<usize>,
    pub base_seed: u64,
    pub runtime_s: Option<f64>,
    pub error: Option<String>,
}

impl SweepResult {
    fn empty(kind: ScenarioKind, d: usize, n: usize, settings: &McSettings) -> Self {
        Self {
            kind,
            d,
            n,
            atom_label: String::new(),
            atom_prob: None,
            v_min: None,
            v_max: None,
            tau: None,
            beta: None,
            beta_se: None,
            gamma: None,
            gamma_se: None,
            gamma_floor_ok: None,
            alpha: settings.alpha,
            constant: settings.constant,
            bound_theorem1: None,
            bound_corollary: None,
            bound_d1: None,
            epsilon_opt: None,
            kappa: None,
            dist_emp: None,
            dist_band: None,
            implied_c: None,
            reps_x: None,
            reps_y: None,
            base_seed: settings.base_seed,
            runtime_s: None,
            error: None,
        }
    }

    /// Resume key: grid point, atom, and seed.
    pub fn key(&self) -> String {
        format!(
            "{}|{}|{}|{}|{}",
            self.kind.name(),
            self.d,
            self.n,
            self.atom_label,
            self.base_seed
        )
    }
}

/// Fill bound and statistics columns of a result row from computed values.
fn fill_bound_columns(row: &mut SweepResult, inputs: &BoundInputs, report: &BoundReport) {
    row.v_min = Some(inputs.v_min_sq.sqrt());
    row.v_max = Some(inputs.v_max_sq.sqrt());
    row.tau = Some(report.tau);
    row.gamma_floor_ok = Some(report.gamma_floor_ok);
    row.bound_theorem1 = report.theorem1;
    row.bound_corollary = report.corollary;
    row.bound_d1 = report.d1;
    row.epsilon_opt = report.smoothing.map(|s| s.epsilon);
    row.kappa = report.smoothing.map(|s| s.kappa);
}

/// Compute statistics, bounds, and the empirical distance for one atom of
/// one scenario; the workhorse behind `simulate` rows and sweep cells.
pub fn run_atom(
    scenario: &ScenarioSpec,
    atom_index: usize,
    settings: &McSettings,
    unit_stream: &SeedStream,
    with_distance: bool,
) -> SweepResult {
    run_atom_detailed(scenario, atom_index, settings, unit_stream, with_distance).0
}

/// Like [`run_atom`] but also hands back the atom statistics (when they
/// were computed successfully) so callers can run extra diagnostics without
/// repeating the nested Monte Carlo work.
pub fn run_atom_detailed(
    scenario: &ScenarioSpec,
    atom_index: usize,
    settings: &McSettings,
    unit_stream: &SeedStream,
    with_distance: bool,
) -> (SweepResult, Option<AtomStatistics>) {
    let started = Instant::now();
    let atom = match scenario.atom(atom_index) {
        Ok(a) => a.clone(),
        Err(e) => {
            let mut row =
                SweepResult::empty(scenario.kind(), scenario.dim(), scenario.steps(), settings);
            row.error = Some(e.to_string());
            return (row, None);
        }
    };
    let mut row = SweepResult::empty(scenario.kind(), scenario.dim(), scenario.steps(), settings);
    row.atom_label = atom.label.clone();
    row.atom_prob = Some(atom.prob);

    let mut stats_out = None;
    let outcome = (|| -> Result<()> {
        let stats =
            compute_atom_statistics(scenario, atom_index, &unit_stream.child(1), settings.mc_budget)?;
        row.beta = Some(stats.beta().value());
        row.beta_se = Some(stats.beta().std_error());
        row.gamma = Some(stats.gamma().value());
        row.gamma_se = Some(stats.gamma().std_error());

        let inputs = BoundInputs::from_stats(&stats, settings.alpha, settings.constant)?;
        let report = evaluate_bounds(&inputs)?;
        fill_bound_columns(&mut row, &inputs, &report);

        if with_distance {
            let est = estimate_kolmogorov(
                scenario,
                atom_index,
                &stats,
                &unit_stream.child(3),
                settings.replications_x,
                settings.replications_y,
                settings.mode,
                settings.band_delta,
            )?;
            row.dist_emp = Some(est.distance);
            row.dist_band = Some(est.band_halfwidth);
            row.reps_x = Some(est.replications_x);
            row.reps_y = Some(est.replications_y);
            if let Some(bound) = report.reference_bound() {
                if bound > 0.0 {
                    row.implied_c = Some(est.distance / bound);
                }
            }
        }
        stats_out = Some(stats);
        Ok(())
    })();
    if let Err(e) = outcome {
        row.error = Some(e.to_string());
    }
    if settings.record_runtime {
        row.runtime_s = Some(started.elapsed().as_secs_f64());
    }
    (row, stats_out)
}

/// Grid sweep over `(kind, d, n)` points. The scenario parameters and atoms
/// act as a template: the trivial-partition kind always runs with a single
/// unit atom, the other kinds take the template atoms.
///
/// Work units are assigned seed streams by their position in the grid, so
/// output is bit-identical for any thread count or schedule.
pub fn run_sweep(
    points: &[(ScenarioKind, usize, usize)],
    params: &ScenarioParams,
    atoms: &[F0Atom],
    settings: &McSettings,
) -> Vec<SweepResult> {
    // Enumerate work units serially so stream indices are schedule-free.
    enum Task {
        Run {
            scenario: Box<ScenarioSpec>,
            atom_index: usize,
            unit: u64,
        },
        Failed(Box<SweepResult>),
    }
    let mut tasks = Vec::new();
    let mut unit = 0u64;
    for &(kind, d, n) in points {
        let atom_list = if kind == ScenarioKind::IidBounded {
            vec![F0Atom::new("w", 1.0)]
        } else {
            atoms.to_vec()
        };
        match ScenarioSpec::new(kind, d, n, *params, atom_list) {
            Ok(scenario) => {
                for atom_index in 0..scenario.atoms().len() {
                    tasks.push(Task::Run {
                        scenario: Box::new(scenario.clone()),
                        atom_index,
                        unit,
                    });
                    unit += 1;
                }
            }
            Err(e) => {
                let mut row = SweepResult::empty(kind, d, n, settings);
                row.error = Some(e.to_string());
                tasks.push(Task::Failed(Box::new(row)));
                unit += 1;
            }
        }
    }
    tasks
        .into_par_iter()
        .map(|task| match task {
            Task::Run {
                scenario,
                atom_index,
                unit,
            } => run_atom(
                &scenario,
                atom_index,
                settings,
                &SeedStream::with_stream(settings.base_seed, unit),
                true,
            ),
            Task::Failed(row) => *row,
        })
        .collect()
}
