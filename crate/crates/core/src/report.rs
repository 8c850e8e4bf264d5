//! The stable, versioned CSV schema for bound and simulation reports.
//!
//! Columns are fixed in order and always all present; absent values are
//! empty fields. Floats are written in Rust's shortest round-trip form, so
//! identical results serialize to identical bytes.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::path::Path;

use crate::harness::SweepResult;

/// Version stamp written into every row.
pub const CSV_SCHEMA_VERSION: &str = "1";

/// The fixed column order.
pub const CSV_COLUMNS: [&str; 30] = [
    "schema_version",
    "command",
    "kind",
    "d",
    "n",
    "atom",
    "atom_prob",
    "v_min",
    "v_max",
    "tau",
    "beta",
    "beta_se",
    "gamma",
    "gamma_se",
    "gamma_floor_ok",
    "alpha",
    "C",
    "bound_theorem1",
    "bound_corollary",
    "bound_d1",
    "epsilon_opt",
    "kappa",
    "dist_emp",
    "dist_band",
    "implied_C",
    "reps_x",
    "reps_y",
    "base_seed",
    "runtime_s",
    "error",
];

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn opt_usize(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn opt_bool(v: Option<bool>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Render one result as a CSV record under the given command name.
pub fn result_record(command: &str, row: &SweepResult) -> Vec<String> {
    vec![
        CSV_SCHEMA_VERSION.to_string(),
        command.to_string(),
        row.kind.name().to_string(),
        row.d.to_string(),
        row.n.to_string(),
        row.atom_label.clone(),
        opt_f64(row.atom_prob),
        opt_f64(row.v_min),
        opt_f64(row.v_max),
        opt_f64(row.tau),
        opt_f64(row.beta),
        opt_f64(row.beta_se),
        opt_f64(row.gamma),
        opt_f64(row.gamma_se),
        opt_bool(row.gamma_floor_ok),
        row.alpha.to_string(),
        row.constant.to_string(),
        opt_f64(row.bound_theorem1),
        opt_f64(row.bound_corollary),
        opt_f64(row.bound_d1),
        opt_f64(row.epsilon_opt),
        opt_f64(row.kappa),
        opt_f64(row.dist_emp),
        opt_f64(row.dist_band),
        opt_f64(row.implied_c),
        opt_usize(row.reps_x),
        opt_usize(row.reps_y),
        row.base_seed.to_string(),
        opt_f64(row.runtime_s),
        row.error.clone().unwrap_or_default(),
    ]
}

/// Resume keys (`kind|d|n|atom|base_seed`) of rows already present in a
/// report file. Missing files yield the empty set.
pub fn read_existing_keys(path: &Path) -> Result<HashSet<String>, ReportError> {
    let mut keys = HashSet::new();
    if !path.exists() {
        return Ok(keys);
    }
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let idx = |name: &str| headers.iter().position(|h| h == name);
    let (Some(ik), Some(id), Some(in_), Some(ia), Some(is)) = (
        idx("kind"),
        idx("d"),
        idx("n"),
        idx("atom"),
        idx("base_seed"),
    ) else {
        return Ok(keys);
    };
    for record in reader.records() {
        let r = record?;
        keys.insert(format!(
            "{}|{}|{}|{}|{}",
            &r[ik], &r[id], &r[in_], &r[ia], &r[is]
        ));
    }
    Ok(keys)
}

/// Append-aware CSV writer for report rows.
pub struct ReportWriter {
    writer: csv::Writer<File>,
    existing: HashSet<String>,
}

impl ReportWriter {
    /// Open `path` for writing. With `append` set and the file already
    /// present, the header is not rewritten and keys of completed rows are
    /// loaded so the caller can skip them.
    pub fn open(path: &Path, append: bool) -> Result<Self, ReportError> {
        let resume = append && path.exists() && std::fs::metadata(path)?.len() > 0;
        let existing = if resume {
            read_existing_keys(path)?
        } else {
            HashSet::new()
        };
        let file = if resume {
            OpenOptions::new().append(true).open(path)?
        } else {
            File::create(path)?
        };
        let mut writer = csv::WriterBuilder::new().from_writer(file);
        if !resume {
            writer.write_record(CSV_COLUMNS)?;
        }
        Ok(Self { writer, existing })
    }

    /// True when an equal-keyed row was already written in a previous run.
    pub fn already_done(&self, row: &SweepResult) -> bool {
        self.existing.contains(&row.key())
    }

    pub fn write_row(&mut self, command: &str, row: &SweepResult) -> Result<(), ReportError> {
        self.writer.write_record(result_record(command, row))?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), ReportError> {
        self.writer.flush()?;
        Ok(())
    }
}

/// Write a full result set to `path`, honoring append/resume semantics.
pub fn write_results(
    path: &Path,
    command: &str,
    rows: &[SweepResult],
    append: bool,
) -> Result<usize, ReportError> {
    let mut writer = ReportWriter::open(path, append)?;
    let mut written = 0;
    for row in rows {
        if writer.already_done(row) {
            continue;
        }
        writer.write_row(command, row)?;
        written += 1;
    }
    writer.finish()?;
    Ok(written)
}
