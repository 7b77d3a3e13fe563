//! Experiment runner behind the `cp2` binary: JSON configs in, versioned
//! JSON reports and text tables out.

pub mod config;
pub mod report;
pub mod runner;

use std::path::{Path, PathBuf};

use thiserror::Error;

use cp2_core::rng::{stream, Domain};
use cp2_core::{dgp_sample, SyntheticDgp};

pub use config::RunConfig;
pub use report::{emit_table, Report};
pub use runner::run;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] cp2_core::Error),

    #[error("invalid CP2_THREADS value `{0}`: expected a positive integer")]
    Threads(String),

    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),

    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

fn file_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::File { path: path.to_path_buf(), message: e.to_string() }
}

/// Worker cap from `CP2_THREADS`; `None` when unset.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var("CP2_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Threads(v)),
        },
    }
}

/// Path of the text table written next to a report.
pub fn table_path(report: &Path) -> PathBuf {
    report.with_extension("txt")
}

/// Writes the report as pretty JSON and its table beside it.
pub fn write_report(report: &Report, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| file_err(dir, e))?;
    }
    let mut json = serde_json::to_string_pretty(report).map_err(|e| file_err(path, e))?;
    json.push('\n');
    std::fs::write(path, json).map_err(|e| file_err(path, e))?;
    let table = table_path(path);
    std::fs::write(&table, emit_table(std::slice::from_ref(report))).map_err(|e| file_err(&table, e))
}

pub fn read_report(path: &Path) -> Result<Report> {
    let text = std::fs::read_to_string(path).map_err(|e| file_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| file_err(path, e))
}

/// Draws `n` samples from `dgp` and writes them as CSV with columns
/// `x0, …, y0, …`.
pub fn synth(dgp: &SyntheticDgp, n: usize, seed: u64, out: &Path) -> Result<()> {
    let data = dgp_sample(dgp, n, &mut stream(seed, Domain::Data, 0))?;
    let mut w = csv::Writer::from_path(out).map_err(|e| file_err(out, e))?;
    let header: Vec<String> = (0..data.feature_dim())
        .map(|i| format!("x{i}"))
        .chain((0..data.response_dim()).map(|i| format!("y{i}")))
        .collect();
    w.write_record(&header).map_err(|e| file_err(out, e))?;
    for s in data.iter() {
        let row: Vec<String> = s.x.iter().chain(&s.y).map(|v| v.to_string()).collect();
        w.write_record(&row).map_err(|e| file_err(out, e))?;
    }
    w.flush().map_err(|e| file_err(out, e))
}
