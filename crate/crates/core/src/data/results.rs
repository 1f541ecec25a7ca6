//! CSV output for solver traces.

use std::path::Path;

use crate::error::{Error, Result};
use crate::solver::IterationRecord;

pub const TRACE_HEADER: [&str; 6] = [
    "iter",
    "F",
    "step_norm",
    "alpha",
    "backtracks",
    "criticality",
];

/// Scientific notation with 17 significant digits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_float(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

/// One row per iterate. The criticality of `x_k` at its accepted stepsize is
/// the step length; the last row, which has no step, uses `final_criticality`.
pub fn write_trace_csv(
    path: &Path,
    history: &[IterationRecord],
    final_criticality: Option<f64>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(TRACE_HEADER)?;
    for (i, r) in history.iter().enumerate() {
        let criticality = if i + 1 == history.len() && r.step_norm.is_none() {
            final_criticality
        } else {
            r.step_norm
        };
        w.write_record([
            r.iter.to_string(),
            fmt_float(r.objective),
            opt_float(r.step_norm),
            opt_float(r.alpha),
            r.backtracks.map(|b| b.to_string()).unwrap_or_default(),
            opt_float(criticality),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Objective against elapsed time for several runs, for convergence plots.
pub fn write_time_curves(path: &Path, runs: &[(u64, &[IterationRecord])]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(["seed", "iter", "time_s", "F"])?;
    for (seed, history) in runs {
        for r in history.iter() {
            w.write_record([
                seed.to_string(),
                r.iter.to_string(),
                fmt_float(r.elapsed_s),
                fmt_float(r.objective),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Argument(format!("{other:?}")),
    }
}
