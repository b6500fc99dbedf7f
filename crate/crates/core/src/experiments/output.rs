use super::monte_carlo::AggregateResult;
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 7] = ["n", "lambda", "R", "metric", "mean", "stderr", "theory"];

/// One row per (aggregate, metric). Floats use the shortest representation
/// that round-trips; a missing theory value is an empty field. `R` counts
/// the replications that succeeded.
pub fn results_csv(rows: &[AggregateResult]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Inconsistent(format!("csv encoding failed: {e}"));
    w.write_record(CSV_HEADER).map_err(io)?;
    for row in rows {
        for m in &row.metrics {
            let theory = m.theory.map(|t| t.to_string()).unwrap_or_default();
            w.write_record([
                row.n.to_string(),
                row.lambda.to_string(),
                row.succeeded.to_string(),
                m.name.clone(),
                m.mean.to_string(),
                m.stderr.to_string(),
                theory,
            ])
            .map_err(io)?;
        }
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Inconsistent(format!("csv encoding failed: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Inconsistent(e.to_string()))
}
