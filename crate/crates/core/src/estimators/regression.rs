//! Difference in means, covariate-adjusted OLS, separate-surface regression
//! adjustment, and propensity-score stratification.

use nalgebra::{DMatrix, DVector};

use super::weighting::fit_propensity;
use super::{
    bootstrap_interval, pick, varying_within, EstimateResult, EstimatorInput, EstimatorOptions,
    Method,
};
use crate::error::{Error, Result};
use crate::linalg::{least_squares, robust_ols, select_columns, select_rows, with_intercept};
use crate::stats::{mean, quantile_sorted, sorted, t_critical, variance};

fn symmetric(point: f64, se: f64, level: f64, df: f64) -> (f64, f64) {
    if se == 0.0 || !se.is_finite() {
        return (point, point);
    }
    let half = t_critical(level, df) * se;
    (point - half, point + half)
}

/// Welch estimate, standard error and degrees of freedom.
fn welch(y1: &[f64], y0: &[f64]) -> (f64, f64, f64) {
    let (n1, n0) = (y1.len() as f64, y0.len() as f64);
    let (a, b) = (variance(y1) / n1, variance(y0) / n0);
    let se = (a + b).sqrt();
    let df = if a + b == 0.0 {
        f64::INFINITY
    } else {
        let d1 = if n1 > 1.0 { a * a / (n1 - 1.0) } else { 0.0 };
        let d0 = if n0 > 1.0 { b * b / (n0 - 1.0) } else { 0.0 };
        (a + b).powi(2) / (d1 + d0).max(f64::MIN_POSITIVE)
    };
    (mean(y1) - mean(y0), se, df)
}

/// Difference of group means with a Welch interval.
pub fn diff_in_means(input: &EstimatorInput, opts: &EstimatorOptions) -> Result<EstimateResult> {
    let y1 = pick(&input.y, &input.treated());
    let y0 = pick(&input.y, &input.controls());
    let (est, se, df) = welch(&y1, &y0);
    Ok(EstimateResult::new(Method::DiffInMeans, est, symmetric(est, se, opts.level, df))
        .diag("se", se)
        .diag("df", df))
}

/// `[1, z, x]` with the covariate columns restricted to `cols`.
fn treatment_design(x: &DMatrix<f64>, z: &[bool], cols: &[usize]) -> DMatrix<f64> {
    let n = x.nrows();
    DMatrix::from_fn(n, cols.len() + 2, |i, j| match j {
        0 => 1.0,
        1 => f64::from(u8::from(z[i])),
        _ => x[(i, cols[j - 2])],
    })
}

/// OLS of `y` on treatment and covariates with an HC1 interval.
pub fn ols_adjust(input: &EstimatorInput, opts: &EstimatorOptions) -> Result<EstimateResult> {
    let all: Vec<usize> = (0..input.n()).collect();
    let cols = varying_within(&input.x, &all);
    let design = treatment_design(&input.x, &input.z, &cols);
    let fit = robust_ols(&design, &DVector::from_column_slice(&input.y))?;
    let est = fit.coef[1];
    let se = fit.cov[(1, 1)].max(0.0).sqrt();
    let df = (input.n() - design.ncols()) as f64;
    Ok(EstimateResult::new(Method::OlsAdjust, est, symmetric(est, se, opts.level, df))
        .diag("se", se))
}

/// Least-squares fit on `rows` (covariates varying there), evaluated on
/// every row of `x`.
fn group_surface(x: &DMatrix<f64>, y: &[f64], rows: &[usize]) -> Result<Vec<f64>> {
    let cols = varying_within(x, rows);
    let design = with_intercept(&select_columns(x, &cols));
    let fit = least_squares(
        &select_rows(&design, rows),
        &DVector::from_vec(pick(y, rows)),
    )?;
    Ok((&design * &fit.coef).iter().copied().collect())
}

fn ra_point(input: &EstimatorInput) -> Result<(f64, Vec<f64>)> {
    let treated = input.treated();
    let mu0 = group_surface(&input.x, &input.y, &input.controls())?;
    let mu1 = group_surface(&input.x, &input.y, &treated)?;
    let est = mean(&treated.iter().map(|&i| input.y[i] - mu0[i]).collect::<Vec<_>>());
    let effects = treated.iter().map(|&i| mu1[i] - mu0[i]).collect();
    Ok((est, effects))
}

/// Separate linear surfaces for each group; the estimate averages
/// `y - mu0_hat` over the treated.
pub fn regression_ra(input: &EstimatorInput, opts: &EstimatorOptions) -> Result<EstimateResult> {
    let p = input.x.ncols();
    let (n1, n0) = (input.n_treated(), input.n() - input.n_treated());
    if n1 <= p + 2 || n0 <= p + 2 {
        return Err(Error::invalid(format!(
            "regression adjustment needs more than {} units per group (treated {n1}, controls {n0})",
            p + 2
        )));
    }
    let (est, effects) = ra_point(input)?;
    let boot = bootstrap_interval(
        input,
        est,
        opts.bootstrap,
        opts.seed,
        opts.interval,
        opts.level,
        |d| ra_point(d).map(|(v, _)| v),
    )?;
    Ok(EstimateResult::new(Method::RegressionRa, est, (boot.lo, boot.hi))
        .diag("bootstrap_failures", boot.failed as f64)
        .effects(effects))
}

/// Greedy selection of linearly independent columns, in order, by modified
/// Gram-Schmidt with a relative tolerance.
fn independent_columns(x: &DMatrix<f64>) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut keep = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let norm = col.norm();
        if norm == 0.0 {
            continue;
        }
        let mut v = col;
        for b in &basis {
            let proj = b.dot(&v);
            v -= b * proj;
        }
        let r = v.norm();
        if r > 1e-9 * norm {
            basis.push(v / r);
            keep.push(j);
        }
    }
    keep
}

struct StratumFit {
    estimate: f64,
    variance: f64,
    df: f64,
    fallback: bool,
}

fn stratum_effect(input: &EstimatorInput, rows: &[usize]) -> StratumFit {
    let sub = input.subset(rows);
    let all: Vec<usize> = (0..sub.n()).collect();
    let cols = varying_within(&sub.x, &all);
    let full = treatment_design(&sub.x, &sub.z, &cols);
    let keep = independent_columns(&full);
    if keep.len() >= 2 && keep[0] == 0 && keep[1] == 1 && sub.n() > keep.len() + 1 {
        let design = select_columns(&full, &keep);
        if let Ok(fit) = robust_ols(&design, &DVector::from_column_slice(&sub.y)) {
            return StratumFit {
                estimate: fit.coef[1],
                variance: fit.cov[(1, 1)].max(0.0),
                df: (sub.n() - design.ncols()) as f64,
                fallback: false,
            };
        }
    }
    let (est, se, df) = welch(&pick(&sub.y, &sub.treated()), &pick(&sub.y, &sub.controls()));
    StratumFit {
        estimate: est,
        variance: se * se,
        df,
        fallback: true,
    }
}

/// Strata on the fitted propensity: cut points at quantiles of the treated
/// units' scores, so each stratum starts with about `n_strata` equal treated
/// counts. Units tied with a cut point fall in the lower stratum. Strata
/// with no treated units are dropped; strata with fewer than two controls
/// are merged into a neighbour.
fn propensity_strata(e: &[f64], z: &[bool], n_strata: usize) -> (Vec<Vec<usize>>, usize) {
    let treated: Vec<f64> = e.iter().zip(z).filter(|(_, &t)| t).map(|(&v, _)| v).collect();
    let ts = sorted(&treated);
    let cuts: Vec<f64> = (1..n_strata)
        .map(|k| quantile_sorted(&ts, k as f64 / n_strata as f64))
        .collect();
    let mut strata = vec![Vec::new(); n_strata];
    for (i, &v) in e.iter().enumerate() {
        strata[cuts.partition_point(|&c| c < v)].push(i);
    }
    strata.retain(|s| s.iter().any(|&i| z[i]));
    let mut merges = 0;
    loop {
        let thin = strata
            .iter()
            .position(|s| s.iter().filter(|&&i| !z[i]).count() < 2);
        match thin {
            Some(k) if strata.len() > 1 => {
                let rows = strata.remove(k);
                let target = if k < strata.len() { k } else { k - 1 };
                strata[target].extend(rows);
                strata[target].sort_unstable();
                merges += 1;
            }
            _ => break,
        }
    }
    (strata, merges)
}

/// Propensity-score subclassification with within-stratum OLS adjustment.
pub fn ps_stratify(input: &EstimatorInput, opts: &EstimatorOptions) -> Result<EstimateResult> {
    if opts.n_strata == 0 {
        return Err(Error::invalid("need at least one stratum"));
    }
    let fit = fit_propensity(&input.x, &input.z)?;
    let (strata, merges) = propensity_strata(&fit.fitted, &input.z, opts.n_strata);
    let n1 = input.n_treated() as f64;
    let (mut est, mut var, mut df) = (0.0, 0.0, 0.0);
    let mut out_diag = Vec::new();
    let mut fallbacks = 0;
    for (k, rows) in strata.iter().enumerate() {
        let t = rows.iter().filter(|&&i| input.z[i]).count() as f64;
        let s = stratum_effect(input, rows);
        let w = t / n1;
        est += w * s.estimate;
        var += w * w * s.variance;
        df += s.df;
        fallbacks += usize::from(s.fallback);
        out_diag.push((format!("stratum_{}_treated", k + 1), t));
    }
    let se = var.sqrt();
    let mut out = EstimateResult::new(
        Method::PsStratify,
        est,
        symmetric(est, se, opts.level, df.max(1.0)),
    );
    out.diagnostics.insert("strata".into(), strata.len() as f64);
    out.diagnostics.insert("se".into(), se);
    for (k, v) in out_diag {
        out.diagnostics.insert(k, v);
    }
    if merges > 0 {
        out.warnings.push(format!(
            "{merges} stratum merge(s) because of fewer than two controls"
        ));
    }
    if fallbacks > 0 {
        out.warnings.push(format!(
            "{fallbacks} stratum(s) used an unadjusted difference in means"
        ));
    }
    Ok(out)
}
