use std::fs;
use std::path::Path;

use super::config::OutputFormat;
use super::run::{ExperimentResult, Method, DETAIL_DIMS};
use crate::error::Result;

pub const CSV_HEADER: [&str; 14] = [
    "problem",
    "method",
    "k",
    "r",
    "n",
    "trials",
    "eigenvalue_error_mean",
    "subspace_error_mean",
    "subspace_err_n1_mean",
    "subspace_err_n2_mean",
    "subspace_err_n3_mean",
    "subspace_err_n4_mean",
    "subspace_err_n5_mean",
    "subspace_err_n6_mean",
];

/// Shortest round-trip form; empty when undefined.
fn num(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

/// One row per `k` per method, in sweep order with `proj` before `altmin`.
pub fn csv_string(res: &ExperimentResult) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    let cfg = &res.config;
    for sweep in &res.sweeps {
        for method in Method::ALL {
            let s = sweep.summary(method);
            let mut row = vec![
                cfg.problem.tag().to_string(),
                method.name().to_string(),
                sweep.k.to_string(),
                cfg.rank.to_string(),
                cfg.active_dim.to_string(),
                s.trials.to_string(),
                num(s.eigenvalue_error_mean),
                num(s.subspace_error_mean),
            ];
            row.extend((0..DETAIL_DIMS).map(|d| num(s.subspace_errors_by_dim_mean[d])));
            w.write_record(&row)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is ASCII"))
}

/// The full result, including every trial and its sketch seed.
pub fn json_string(res: &ExperimentResult) -> Result<String> {
    Ok(serde_json::to_string_pretty(res)?)
}

pub fn emit_results(res: &ExperimentResult, format: OutputFormat, path: &Path) -> Result<()> {
    let text = match format {
        OutputFormat::Csv => csv_string(res)?,
        OutputFormat::Json => json_string(res)?,
    };
    fs::write(path, text)?;
    Ok(())
}
