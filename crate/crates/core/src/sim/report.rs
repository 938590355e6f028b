//! Mean squared error tables and boxplot data from persisted records.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::experiment::{open_records, records_path, MethodStatus, ReplicationRecord, SideErrors};
use super::{Method, TruePrior, RAW_METHOD};
use crate::error::{Error, Result};

/// Reads every `records-<prior>.ndjson` file in `dir`.
pub fn load_records(dir: &Path) -> Result<Vec<ReplicationRecord>> {
    let mut out = Vec::new();
    for prior in TruePrior::ALL {
        let path = records_path(dir, prior);
        if path.exists() {
            out.extend(open_records(&path)?);
        }
    }
    if out.is_empty() {
        return Err(Error::Config(format!("no records found in {}", dir.display())));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MseRow {
    pub i: usize,
    pub prior: String,
    pub method: String,
    /// `None` when some replication lacks a successful result for the method.
    pub mse: Option<f64>,
    #[serde(rename = "nErrors")]
    pub n_errors: usize,
}

fn side_errors<'a>(record: &'a ReplicationRecord, method: &str) -> Option<&'a SideErrors> {
    if method == RAW_METHOD {
        return Some(&record.raw);
    }
    record.method(method).filter(|m| m.status == MethodStatus::Ok).and_then(|m| m.errors.as_ref())
}

// Methods present anywhere in the records, in canonical order, then the raw baseline.
fn methods_seen(records: &[ReplicationRecord]) -> Vec<String> {
    let mut names: Vec<String> = Method::ALL
        .iter()
        .map(|m| m.name().to_string())
        .filter(|n| records.iter().any(|r| r.method(n).is_some()))
        .collect();
    names.push(RAW_METHOD.to_string());
    names
}

fn priors_seen(records: &[ReplicationRecord]) -> Vec<TruePrior> {
    TruePrior::ALL.into_iter().filter(|p| records.iter().any(|r| r.prior == *p)).collect()
}

/// Pools `(θ̂_i - θ_i)²` and `(θ_{p+1-i} - θ̂_{p+1-i})²` over replications for
/// each `i <= i_max`, prior and method.
pub fn mse_table(records: &[ReplicationRecord], i_max: usize) -> Vec<MseRow> {
    let mut rows = Vec::new();
    for i in 1..=i_max {
        for prior in priors_seen(records) {
            let reps: Vec<&ReplicationRecord> = records.iter().filter(|r| r.prior == prior).collect();
            for method in methods_seen(records) {
                let mut sum = 0.0;
                let mut n = 0;
                let mut complete = true;
                for r in &reps {
                    match side_errors(r, &method) {
                        Some(e) if e.low.len() >= i && e.high.len() >= i => {
                            sum += e.low[i - 1].powi(2) + e.high[i - 1].powi(2);
                            n += 2;
                        }
                        _ => complete = false,
                    }
                }
                rows.push(MseRow {
                    i,
                    prior: prior.name().into(),
                    method: method.clone(),
                    mse: (complete && n > 0).then(|| sum / n as f64),
                    n_errors: n,
                });
            }
        }
    }
    rows
}

pub fn write_csv<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Formats MSE rows as a grid: one line per (i, prior), one column per method.
pub fn render_table(rows: &[MseRow]) -> String {
    let mut methods: Vec<&str> = Vec::new();
    for r in rows {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    let label = |m: &str| Method::parse(m).map_or(m.to_string(), |x| x.label().to_string());
    let mut out = format!("{:>3} {:>7}", "i", "prior");
    for m in &methods {
        let _ = write!(out, " {:>10}", label(m));
    }
    out.push('\n');
    let mut keys: Vec<(usize, &str)> = Vec::new();
    for r in rows {
        if !keys.contains(&(r.i, r.prior.as_str())) {
            keys.push((r.i, &r.prior));
        }
    }
    for (i, prior) in keys {
        let _ = write!(out, "{i:>3} {prior:>7}");
        for m in &methods {
            let cell = rows.iter().find(|r| r.i == i && r.prior == prior && r.method == *m).and_then(|r| r.mse);
            match cell {
                Some(v) => {
                    let _ = write!(out, " {v:>10.3}");
                }
                None => {
                    let _ = write!(out, " {:>10}", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxplotRow {
    pub rep: usize,
    pub side: &'static str,
    pub prior: String,
    pub method: String,
    pub error: f64,
}

/// Five-number summary of one (prior, method) cell, with type-7 quantiles.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxplotSummary {
    pub prior: String,
    pub method: String,
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Signed errors at the two most extreme coordinates, one row per
/// replication and side, plus per-cell summaries.
pub fn boxplot_export(records: &[ReplicationRecord]) -> (Vec<BoxplotRow>, Vec<BoxplotSummary>) {
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for prior in priors_seen(records) {
        for method in methods_seen(records) {
            let start = rows.len();
            for r in records.iter().filter(|r| r.prior == prior) {
                if let Some(e) = side_errors(r, &method) {
                    for (side, v) in [("low", e.low.first()), ("high", e.high.first())] {
                        if let Some(&error) = v {
                            rows.push(BoxplotRow {
                                rep: r.rep,
                                side,
                                prior: prior.name().into(),
                                method: method.clone(),
                                error,
                            });
                        }
                    }
                }
            }
            let mut values: Vec<f64> = rows[start..].iter().map(|r| r.error).collect();
            if values.is_empty() {
                continue;
            }
            values.sort_by(f64::total_cmp);
            summaries.push(BoxplotSummary {
                prior: prior.name().into(),
                method,
                n: values.len(),
                min: values[0],
                q1: quantile_sorted(&values, 0.25),
                median: quantile_sorted(&values, 0.5),
                q3: quantile_sorted(&values, 0.75),
                max: values[values.len() - 1],
            });
        }
    }
    (rows, summaries)
}
