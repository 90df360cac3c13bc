//! Per-method performance: bias, RMSE, coverage, interval length, PEHE.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::cells::CellKey;
use super::grid::{EstimateRow, TruthRow};
use crate::dgp::fmt;
use crate::error::{Error, Result};
use crate::estimators::Method;
use crate::stats::{mean, quantile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    /// Rows with an estimate.
    pub cells: usize,
    pub failures: usize,
    pub bias: Option<f64>,
    pub rmse: Option<f64>,
    pub coverage: Option<f64>,
    pub mean_interval_length: Option<f64>,
    pub mean_pehe: Option<f64>,
    pub mean_wall_time: Option<f64>,
    pub bias_q25: Option<f64>,
    pub bias_q75: Option<f64>,
}

impl MethodSummary {
    pub fn bias_iqr(&self) -> Option<f64> {
        Some(self.bias_q75? - self.bias_q25?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub methods: Vec<MethodSummary>,
}

impl EvalSummary {
    pub fn get(&self, method: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }

    /// Methods by ascending RMSE, ties broken by name; methods without an
    /// RMSE go last.
    pub fn ranked(&self) -> Vec<&MethodSummary> {
        let mut v: Vec<&MethodSummary> = self.methods.iter().collect();
        v.sort_by(|a, b| match (a.rmse, b.rmse) {
            (Some(x), Some(y)) => x.total_cmp(&y).then_with(|| a.method.name().cmp(b.method.name())),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => a.method.name().cmp(b.method.name()),
        });
        v
    }
}

/// Map every estimate row to its truth, failing with the list of rows that
/// have none.
pub(crate) fn join_truths(
    estimates: &[EstimateRow],
    truths: &[TruthRow],
) -> Result<BTreeMap<CellKey, f64>> {
    let map: BTreeMap<CellKey, f64> = truths
        .iter()
        .map(|t| (CellKey::new(t.setting, t.replication), t.satt))
        .collect();
    let orphans: BTreeSet<String> = estimates
        .iter()
        .filter(|r| !map.contains_key(&r.key()))
        .map(|r| format!("setting {} replication {} ({})", r.setting, r.replication, r.method))
        .collect();
    if !orphans.is_empty() {
        return Err(Error::Orphans(orphans.into_iter().collect()));
    }
    Ok(map)
}

fn mean_opt(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| mean(v))
}

/// Summaries per method, in registry order. The bias quartiles pool every
/// successful cell of the method.
pub fn summarize(estimates: &[EstimateRow], truths: &[TruthRow]) -> Result<EvalSummary> {
    let truth = join_truths(estimates, truths)?;
    let mut by_method: BTreeMap<Method, Vec<&EstimateRow>> = BTreeMap::new();
    for r in estimates {
        by_method.entry(r.method).or_default().push(r);
    }
    let methods = by_method
        .into_iter()
        .map(|(method, rows)| {
            let ok: Vec<&&EstimateRow> = rows.iter().filter(|r| r.is_ok()).collect();
            // Sort by cell so floating-point sums ignore input order.
            let mut ok = ok;
            ok.sort_by_key(|r| r.key());
            let errors: Vec<f64> = ok
                .iter()
                .map(|r| r.satt_hat.unwrap_or_default() - truth[&r.key()])
                .collect();
            let with_interval: Vec<&&&EstimateRow> =
                ok.iter().filter(|r| r.lo.is_some() && r.hi.is_some()).collect();
            let covered: Vec<f64> = with_interval
                .iter()
                .map(|r| {
                    let t = truth[&r.key()];
                    f64::from(r.lo.unwrap_or_default() <= t && t <= r.hi.unwrap_or_default())
                })
                .collect();
            let lengths: Vec<f64> = with_interval
                .iter()
                .map(|r| r.hi.unwrap_or_default() - r.lo.unwrap_or_default())
                .collect();
            let pehe: Vec<f64> = ok.iter().filter_map(|r| r.pehe).collect();
            let times: Vec<f64> = rows.iter().filter_map(|r| r.wall_time).collect();
            let sq: Vec<f64> = errors.iter().map(|e| e * e).collect();
            MethodSummary {
                method,
                cells: ok.len(),
                failures: rows.len() - ok.len(),
                bias: mean_opt(&errors),
                rmse: mean_opt(&sq).map(f64::sqrt),
                coverage: mean_opt(&covered),
                mean_interval_length: mean_opt(&lengths),
                mean_pehe: mean_opt(&pehe),
                mean_wall_time: mean_opt(&times),
                bias_q25: (!errors.is_empty()).then(|| quantile(&errors, 0.25)),
                bias_q75: (!errors.is_empty()).then(|| quantile(&errors, 0.75)),
            }
        })
        .collect();
    Ok(EvalSummary { methods })
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

/// Write summary.csv. Wall time is omitted so the file is reproducible.
pub fn write_summary_csv(path: &Path, summary: &EvalSummary) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| crate::dgp::csv_io(path, e))?;
    w.write_record([
        "method",
        "cells",
        "failures",
        "bias",
        "rmse",
        "coverage",
        "mean_interval_length",
        "mean_pehe",
        "bias_q25",
        "bias_q75",
        "bias_iqr",
    ])?;
    for m in &summary.methods {
        w.write_record([
            m.method.name().to_owned(),
            m.cells.to_string(),
            m.failures.to_string(),
            opt(m.bias),
            opt(m.rmse),
            opt(m.coverage),
            opt(m.mean_interval_length),
            opt(m.mean_pehe),
            opt(m.bias_q25),
            opt(m.bias_q75),
            opt(m.bias_iqr()),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Plain-text leaderboard ordered by RMSE. Wall time is a column only when
/// `with_times` is set, since it varies between runs.
pub fn render_report(summary: &EvalSummary, with_times: bool) -> String {
    let cell = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
    let mut out = format!(
        "{:<4} {:<20} {:>8} {:>8} {:>8} {:>9} {:>8} {:>9} {:>6}\n",
        "rank", "method", "rmse", "bias", "coverage", "int_len", "pehe", "time_s", "cells"
    );
    for (i, m) in summary.ranked().into_iter().enumerate() {
        out.push_str(&format!(
            "{:<4} {:<20} {:>8} {:>8} {:>8} {:>9} {:>8} {:>9} {:>6}\n",
            i + 1,
            m.method.name(),
            cell(m.rmse),
            cell(m.bias),
            cell(m.coverage),
            cell(m.mean_interval_length),
            cell(m.mean_pehe),
            if with_times { cell(m.mean_wall_time) } else { "-".into() },
            m.cells
        ));
    }
    out
}
