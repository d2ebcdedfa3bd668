//! Experiment harness: strict JSON configs in, CSV data and a JSON report out.

pub mod config;
pub mod discrepancy;
pub mod manifold;
pub mod optimize;
pub mod report;
pub mod sample;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use geomint::parallel::map_indexed;
use geomint::Execution;

use crate::report::Repetition;

pub use report::Report;

pub const REPORT_FILE: &str = "report.json";

/// Runs repetitions on the work pool; each owns its RNG stream and files.
pub(crate) fn run_reps<F>(exec: Execution, reps: usize, f: F) -> Vec<Repetition>
where
    F: Fn(usize) -> Repetition + Sync + Send,
{
    map_indexed(exec, reps, f)
}

/// Creates `dir/name`, hands a buffered writer to `body`, and returns `name`.
pub(crate) fn write_file<F>(dir: &Path, name: &str, body: F) -> anyhow::Result<String>
where
    F: FnOnce(&mut BufWriter<File>) -> anyhow::Result<()>,
{
    let mut w = BufWriter::new(File::create(dir.join(name))?);
    body(&mut w)?;
    w.flush()?;
    Ok(name.to_string())
}

/// Formats a float for use in a file or metric name: `0.25` becomes `0p25`.
pub(crate) fn tag(x: f64) -> String {
    format!("{x}").replace('.', "p").replace('-', "m")
}
