//! Batch entry point: property-suite runner, single bound evaluation,
//! Monte Carlo simulation, and grid sweeps, driven by a TOML config and
//! emitting CSV.
//!
//! Exit codes: 0 success, 1 suite or run failure, 2 configuration error.

pub mod config;

use std::path::{Path, PathBuf};

use martmax::bounds::probability_weighted_mean;
use martmax::harness::{
    run_atom_detailed, run_sweep, smoothed_distance_diagnostic, McSettings, SweepResult,
};
use martmax::martingale::ScenarioKind;
use martmax::report::write_results;
use martmax::verify::{run_suites, SuiteResult, VerifySettings};
use martmax::SeedStream;

use config::{Command, ConfigError, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// Parsed command-line arguments.
#[derive(Debug, Clone)]
pub struct CliArgs {
    pub config: PathBuf,
    /// Overrides `output.csv` from the config.
    pub out: Option<PathBuf>,
    /// Worker threads; 0 means the library default.
    pub threads: usize,
    /// Restrict `verify`/`selftest` to a single suite.
    pub only: Option<String>,
}

/// Run the tool and return the process exit code.
pub fn run(args: &CliArgs) -> i32 {
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read config {}: {e}", args.config.display());
            return EXIT_CONFIG;
        }
    };
    let parsed = match config::parse(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    if let Err(e) = parsed.validate() {
        eprintln!("error: {e}");
        return EXIT_CONFIG;
    }

    let pool = {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if args.threads > 0 {
            builder = builder.num_threads(args.threads);
        }
        match builder.build() {
            Ok(p) => p,
            Err(e) => {
                eprintln!("error: cannot build thread pool: {e}");
                return EXIT_FAILURE;
            }
        }
    };
    pool.install(|| dispatch(&parsed, args))
}

fn dispatch(cfg: &RunConfig, args: &CliArgs) -> i32 {
    match cfg.command {
        Command::Verify => run_verify(cfg, args, false),
        Command::Selftest => run_verify(cfg, args, true),
        Command::Bound => run_rows(cfg, args, false),
        Command::Simulate => run_rows(cfg, args, true),
        Command::Sweep => run_sweep_command(cfg, args),
    }
}

fn print_suites(results: &[SuiteResult]) -> bool {
    let mut all_passed = true;
    for r in results {
        println!(
            "suite {:<20} {}   cases {:>7}   worst margin {:>12.4e}   {}",
            r.name,
            if r.passed { "pass" } else { "FAIL" },
            r.cases,
            r.worst_margin,
            r.detail
        );
        all_passed &= r.passed;
    }
    println!("overall: {}", if all_passed { "pass" } else { "FAIL" });
    all_passed
}

fn run_verify(cfg: &RunConfig, args: &CliArgs, quick: bool) -> i32 {
    let vcfg = cfg.verify.as_ref().expect("validated");
    let mut settings = if quick {
        VerifySettings::quick(vcfg.base_seed)
    } else {
        VerifySettings {
            base_seed: vcfg.base_seed,
            ..VerifySettings::default()
        }
    };
    if let Some(kappas) = &vcfg.kappas {
        settings.kappas = kappas.clone();
    }
    let only = args.only.as_deref().or(vcfg.only.as_deref());
    match run_suites(&settings, only) {
        Ok(results) => {
            if print_suites(&results) {
                EXIT_OK
            } else {
                EXIT_FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}

fn settings_from(cfg: &RunConfig) -> McSettings {
    let mut settings = McSettings::default();
    if let Some(mc) = &cfg.mc {
        settings.replications_x = mc.replications;
        settings.replications_y = mc.replications_y.unwrap_or(mc.replications);
        settings.base_seed = mc.base_seed;
        if let Some(delta) = mc.delta {
            settings.band_delta = delta;
        }
        if let Some(mode) = mc.mode {
            settings.mode = mode;
        }
        if let Some(budget) = mc.mc_budget {
            settings.mc_budget = budget;
        }
    }
    if let Some(bound) = &cfg.bound {
        if let Some(alpha) = bound.alpha {
            settings.alpha = alpha;
        }
        if let Some(c) = bound.constant {
            settings.constant = c;
        }
    }
    if let Some(output) = &cfg.output {
        settings.record_runtime = output.record_runtime.unwrap_or(false);
    }
    settings
}

fn output_path(cfg: &RunConfig, args: &CliArgs) -> Result<PathBuf, ConfigError> {
    if let Some(out) = &args.out {
        return Ok(out.clone());
    }
    cfg.output
        .as_ref()
        .and_then(|o| o.csv.clone())
        .ok_or_else(|| ConfigError("no output path: set output.csv or pass --out".into()))
}

fn emit(path: &Path, command: &str, rows: &[SweepResult], append: bool) -> i32 {
    match write_results(path, command, rows, append) {
        Ok(written) => {
            eprintln!(
                "{command}: wrote {written} row(s) to {} ({} total in set)",
                path.display(),
                rows.len()
            );
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}

/// `bound` and `simulate`: one row per atom of the configured scenario.
fn run_rows(cfg: &RunConfig, args: &CliArgs, with_distance: bool) -> i32 {
    let scenario_cfg = cfg.scenario.as_ref().expect("validated");
    let path = match output_path(cfg, args) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let scenario = match scenario_cfg.to_spec() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: invalid scenario: {e}");
            return EXIT_CONFIG;
        }
    };
    let settings = settings_from(cfg);
    let command = if with_distance { "simulate" } else { "bound" };
    if scenario.dim() == 2 {
        eprintln!(
            "note: d = 2 gives ln d = {:.4} < 1; the general bound is evaluated as printed",
            2.0_f64.ln()
        );
    }
    let diagnostic = cfg
        .mc
        .as_ref()
        .and_then(|m| m.diagnostic)
        .unwrap_or(with_distance);

    let mut rows = Vec::new();
    let mut weighted = Vec::new();
    for atom_index in 0..scenario.atoms().len() {
        let unit = SeedStream::with_stream(settings.base_seed, atom_index as u64);
        let (row, stats) =
            run_atom_detailed(&scenario, atom_index, &settings, &unit, with_distance);
        if let Some(err) = &row.error {
            eprintln!("atom '{}': error: {err}", row.atom_label);
        }
        if row.beta.unwrap_or(0.0) > 0.0 && row.bound_corollary.is_some() {
            eprintln!(
                "warning: atom '{}' has beta > 0; the corollary column assumes beta = 0",
                row.atom_label
            );
        }
        if let (Some(bound), Some(prob)) = (row.bound_theorem1.or(row.bound_d1), row.atom_prob) {
            weighted.push((bound, prob));
        }
        if with_distance && diagnostic && scenario.dim() >= 2 {
            if let Some(stats) = &stats {
                let reps = settings.replications_x.min(4000);
                match smoothed_distance_diagnostic(
                    &scenario,
                    atom_index,
                    stats,
                    &unit.child(5),
                    reps,
                    settings.alpha,
                ) {
                    Ok(diag) => eprintln!(
                        "atom '{}': smoothed distance diagnostic {diag:.6} ({reps} replications, \
                         non-certified)",
                        row.atom_label
                    ),
                    Err(e) => eprintln!(
                        "atom '{}': smoothed diagnostic unavailable: {e}",
                        row.atom_label
                    ),
                }
            }
        }
        rows.push(row);
    }
    if !weighted.is_empty() {
        eprintln!(
            "probability-weighted mean bound {:.6} (reporting convenience; the bound itself \
             is per atom)",
            probability_weighted_mean(&weighted)
        );
    }
    let append = cfg.output.as_ref().and_then(|o| o.append).unwrap_or(false);
    emit(&path, command, &rows, append)
}

fn run_sweep_command(cfg: &RunConfig, args: &CliArgs) -> i32 {
    let sweep = cfg.sweep.as_ref().expect("validated");
    let path = match output_path(cfg, args) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let settings = settings_from(cfg);
    let (params, atoms) = match &cfg.scenario {
        Some(s) => (s.params(), s.atom_list()),
        None => (
            Default::default(),
            vec![martmax::martingale::F0Atom::new("w", 1.0)],
        ),
    };
    let mut points: Vec<(ScenarioKind, usize, usize)> = Vec::new();
    for &kind in &sweep.kinds {
        for &d in &sweep.d {
            for &n in &sweep.n {
                points.push((kind, d, n));
            }
        }
    }
    eprintln!("sweep: {} grid point(s)", points.len());
    let rows = run_sweep(&points, &params, &atoms, &settings);
    for row in rows.iter().filter(|r| r.error.is_some()) {
        eprintln!(
            "sweep point ({}, d={}, n={}) atom '{}': {}",
            row.kind.name(),
            row.d,
            row.n,
            row.atom_label,
            row.error.as_deref().unwrap_or("")
        );
    }
    let append = cfg.output.as_ref().and_then(|o| o.append).unwrap_or(false);
    emit(&path, "sweep", &rows, append)
}
