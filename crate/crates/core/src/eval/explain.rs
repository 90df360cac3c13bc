//! How much of each method's error do dataset descriptors explain?

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::cells::CellKey;
use super::grid::{EstimateRow, TruthRow};
use super::summary::join_truths;
use crate::dgp::fmt;
use crate::error::{Error, Result};
use crate::estimators::Method;
use crate::linalg::{least_squares, varying_columns, select_columns, with_intercept};
use crate::metrics::MetricVector;
use crate::stats::mean;

/// Fewest cells per method for which the regressions are run.
pub const MIN_CELLS: usize = 30;

/// Floor inside the log so exact hits stay finite.
pub const LOG_FLOOR: f64 = 1e-6;

pub fn log_abs_error(e: f64) -> f64 {
    (e.abs() + LOG_FLOOR).ln()
}

/// R^2 of `log(|bias| + 1e-6)` on four nested-by-design blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainRow {
    pub method: Method,
    pub cells: usize,
    /// Observable metrics and their squares.
    pub nonoracle_metrics: Option<f64>,
    /// Setting indicators.
    pub settings: Option<f64>,
    /// Every metric (observable and oracle) and their squares.
    pub all_metrics: Option<f64>,
    /// Setting indicators plus every metric and their squares.
    pub settings_and_metrics: Option<f64>,
    /// Some block was rank deficient and fit by minimum norm.
    pub rank_deficient: bool,
    pub note: Option<String>,
}

/// R^2 and rank deficiency of an intercept-plus-`design` fit. `None` when
/// there are fewer than `cols + 2` rows.
pub fn block_r2(y: &[f64], design: &DMatrix<f64>) -> Result<Option<(f64, bool)>> {
    let keep = varying_columns(design);
    let d = select_columns(design, &keep);
    if y.len() < d.ncols() + 2 {
        return Ok(None);
    }
    let m = mean(y);
    let sst: f64 = y.iter().map(|v| (v - m) * (v - m)).sum();
    let full = with_intercept(&d);
    let fit = least_squares(&full, &DVector::from_column_slice(y))?;
    let deficient = fit.rank < full.ncols();
    if !(sst > 0.0) {
        return Ok(Some((0.0, deficient)));
    }
    let sse: f64 = y.iter().zip(fit.fitted.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(Some(((1.0 - sse / sst).clamp(0.0, 1.0), deficient)))
}

/// Centered columns followed by their squares.
fn with_squares(cols: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = cols
        .iter()
        .map(|c| {
            let m = mean(c);
            c.iter().map(|v| v - m).collect()
        })
        .collect();
    let squares: Vec<Vec<f64>> = out.iter().map(|c| c.iter().map(|v| v * v).collect()).collect();
    out.extend(squares);
    out
}

fn indicators(settings: &[usize]) -> Vec<Vec<f64>> {
    let mut levels: Vec<usize> = settings.to_vec();
    levels.sort_unstable();
    levels.dedup();
    levels
        .iter()
        .skip(1)
        .map(|&l| settings.iter().map(|&s| f64::from(s == l)).collect())
        .collect()
}

fn matrix(rows: usize, blocks: &[&[Vec<f64>]]) -> DMatrix<f64> {
    let cols: Vec<&Vec<f64>> = blocks.iter().flat_map(|b| b.iter()).collect();
    DMatrix::from_fn(rows, cols.len(), |i, j| cols[j][i])
}

/// Regress each method's `log(|bias| + 1e-6)` on descriptor blocks.
/// Methods with fewer than [`MIN_CELLS`] successful cells get a row with
/// no R^2 values and a note.
pub fn explain_performance(
    estimates: &[EstimateRow],
    truths: &[TruthRow],
    metrics: &[MetricVector],
) -> Result<Vec<ExplainRow>> {
    let truth = join_truths(estimates, truths)?;
    let by_cell: BTreeMap<CellKey, &MetricVector> = metrics
        .iter()
        .map(|m| (CellKey::new(m.setting, m.replication), m))
        .collect();
    let missing: Vec<String> = estimates
        .iter()
        .filter(|r| r.is_ok() && !by_cell.contains_key(&r.key()))
        .map(|r| format!("setting {} replication {} has no metrics", r.setting, r.replication))
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    if !missing.is_empty() {
        return Err(Error::Orphans(missing));
    }
    let mut by_method: BTreeMap<Method, Vec<&EstimateRow>> = BTreeMap::new();
    for r in estimates.iter().filter(|r| r.is_ok()) {
        by_method.entry(r.method).or_default().push(r);
    }
    let mut out = Vec::new();
    for (method, mut rows) in by_method {
        rows.sort_by_key(|r| r.key());
        let n = rows.len();
        let mut row = ExplainRow {
            method,
            cells: n,
            nonoracle_metrics: None,
            settings: None,
            all_metrics: None,
            settings_and_metrics: None,
            rank_deficient: false,
            note: None,
        };
        if n < MIN_CELLS {
            row.note = Some(format!("needs at least {MIN_CELLS} cells"));
            out.push(row);
            continue;
        }
        let y: Vec<f64> = rows
            .iter()
            .map(|r| log_abs_error(r.satt_hat.unwrap_or_default() - truth[&r.key()]))
            .collect();
        let vectors: Vec<&MetricVector> = rows.iter().map(|r| by_cell[&r.key()]).collect();
        let width = vectors[0].entries.len();
        if vectors.iter().any(|v| v.entries.len() != width) {
            return Err(Error::invalid("metric vectors have different lengths"));
        }
        let column = |j: usize| vectors.iter().map(|v| v.entries[j].value).collect::<Vec<_>>();
        let observable: Vec<Vec<f64>> = (0..width)
            .filter(|&j| !vectors[0].entries[j].oracle)
            .map(column)
            .collect();
        let all: Vec<Vec<f64>> = (0..width).map(column).collect();
        let obs_block = with_squares(&observable);
        let all_block = with_squares(&all);
        let set_block = indicators(&rows.iter().map(|r| r.setting).collect::<Vec<_>>());
        let mut fit = |blocks: &[&[Vec<f64>]]| -> Result<Option<f64>> {
            Ok(block_r2(&y, &matrix(n, blocks))?.map(|(r2, def)| {
                row.rank_deficient |= def;
                r2
            }))
        };
        let a = fit(&[&obs_block])?;
        let b = fit(&[&set_block])?;
        let c = fit(&[&all_block])?;
        let d = fit(&[&set_block, &all_block])?;
        row.nonoracle_metrics = a;
        row.settings = b;
        row.all_metrics = c;
        row.settings_and_metrics = d;
        if [a, b, c, d].iter().any(Option::is_none) {
            row.note = Some("too few cells for some blocks".into());
        }
        out.push(row);
    }
    Ok(out)
}

pub fn write_r2_table_csv(path: &Path, rows: &[ExplainRow]) -> Result<()> {
    let opt = |v: Option<f64>| v.map(fmt).unwrap_or_default();
    let mut w = csv::Writer::from_path(path).map_err(|e| crate::dgp::csv_io(path, e))?;
    w.write_record([
        "method",
        "cells",
        "nonoracle_metrics",
        "settings",
        "all_metrics",
        "settings_and_metrics",
        "rank_deficient",
        "note",
    ])?;
    for r in rows {
        w.write_record([
            r.method.name().to_owned(),
            r.cells.to_string(),
            opt(r.nonoracle_metrics),
            opt(r.settings),
            opt(r.all_metrics),
            opt(r.settings_and_metrics),
            r.rank_deficient.to_string(),
            r.note.clone().unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
