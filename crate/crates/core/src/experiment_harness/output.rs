use std::io::Write;

use super::cross_section::CrossSectionRow;
use super::summary::ExperimentResult;
use crate::error::Result;

pub const REPLICATIONS_HEADER: [&str; 6] = ["rep", "method", "true_mse", "mse", "score", "fit_status"];
pub const CROSS_SECTION_HEADER: [&str; 5] = ["x", "mean", "lower95", "upper95", "det_mean"];

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

/// One row per (replication, method); metrics are blank for failed fits and
/// `true_mse` is blank when the simulator has no analytic mean.
pub fn write_replications_csv<W: Write>(result: &ExperimentResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPLICATIONS_HEADER)?;
    for r in &result.per_replication {
        for o in &r.outcomes {
            let m = o.metrics;
            w.write_record([
                r.rep.to_string(),
                o.method.to_string(),
                cell(m.and_then(|m| m.true_mse)),
                cell(m.map(|m| m.mse)),
                cell(m.map(|m| m.score)),
                o.status.as_str().to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Configuration, per-method quartiles and failure counts, and every replication's outcome.
pub fn write_summary_json<W: Write>(result: &ExperimentResult, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, result)?;
    writeln!(out)?;
    Ok(())
}

pub fn write_cross_section_csv<W: Write>(rows: &[CrossSectionRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CROSS_SECTION_HEADER)?;
    for r in rows {
        w.write_record([
            cell(Some(r.x)),
            cell(Some(r.mean)),
            cell(Some(r.lower95)),
            cell(Some(r.upper95)),
            cell(r.det_mean),
        ])?;
    }
    w.flush()?;
    Ok(())
}
