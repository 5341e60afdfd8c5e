//! Per-iteration traces of the iterative detectors.

use std::io::Write;

use serde::{Deserialize, Serialize};

/// One iteration of a detector loop.
///
/// `max_change` is the largest relative precision change for the activity
/// detector and the largest absolute symbol-belief change for the data
/// detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub max_change: f64,
    pub lambda_mean: f64,
}

pub fn write_iterations_csv<W: Write>(records: &[IterationRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    if records.is_empty() {
        w.write_record(["iteration", "max_change", "lambda_mean"])?;
    }
    w.flush()?;
    Ok(())
}
