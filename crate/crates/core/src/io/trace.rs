//! Per-iteration trace as CSV: `iter,objective,recon_evals,millis`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::FitTrace;

pub const TRACE_HEADER: &str = "iter,objective,recon_evals,millis";

/// Iterations are numbered from 1. `millis` is wall-clock and the only
/// column that varies between identical runs.
pub fn write_trace(trace: &FitTrace) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for i in 0..trace.len() {
        let millis = trace.elapsed.get(i).map_or(0.0, |d| d.as_secs_f64() * 1e3);
        let _ = writeln!(
            out,
            "{},{},{},{:.3}",
            i + 1,
            trace.objective[i],
            trace.recon_evals[i],
            millis
        );
    }
    out
}

pub fn save_trace(path: impl AsRef<Path>, trace: &FitTrace) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_trace(trace)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Duration;

    #[test]
    fn csv_layout() {
        let trace = FitTrace {
            objective: vec![3.5, 2.25],
            recon_evals: vec![1, 1],
            elapsed: vec![Duration::from_micros(1500), Duration::from_millis(2)],
        };
        assert_eq!(
            write_trace(&trace),
            "iter,objective,recon_evals,millis\n1,3.5,1,1.500\n2,2.25,1,2.000\n"
        );
    }
}
