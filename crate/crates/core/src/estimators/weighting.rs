//! Propensity weighting: IPTW for the treated and the IPW + regression
//! adjustment doubly robust estimator.

use nalgebra::{DMatrix, DVector};

use super::{
    bootstrap_interval, pick, varying_within, EstimateResult, EstimatorInput, EstimatorOptions,
    Method,
};
use crate::error::{Error, Result};
use crate::linalg::{
    logistic_irls, select_columns, select_rows, weighted_least_squares, with_intercept,
    LogisticFit, LogisticOptions,
};
use crate::stats::mean;

/// Logistic propensity model of `z` on the columns of `x` that vary.
pub fn fit_propensity(x: &DMatrix<f64>, z: &[bool]) -> Result<LogisticFit> {
    let all: Vec<usize> = (0..x.nrows()).collect();
    let cols = varying_within(x, &all);
    logistic_irls(&select_columns(x, &cols), z, LogisticOptions::default())
}

/// ATT weights: 1 for treated units and `e / (1 - e)` for controls, with
/// `e` clamped to `truncation`; control weights are normalized to sum to 1,
/// as are treated weights.
pub fn att_weights(z: &[bool], e: &[f64], truncation: (f64, f64)) -> Vec<f64> {
    let n1 = z.iter().filter(|&&t| t).count() as f64;
    let mut w: Vec<f64> = z
        .iter()
        .zip(e)
        .map(|(&t, &p)| {
            if t {
                1.0 / n1
            } else {
                let p = p.clamp(truncation.0, truncation.1);
                p / (1.0 - p)
            }
        })
        .collect();
    let total: f64 = w.iter().zip(z).filter(|(_, &t)| !t).map(|(w, _)| w).sum();
    for (w, &t) in w.iter_mut().zip(z) {
        if !t {
            *w /= total;
        }
    }
    w
}

/// Kish effective sample size of a weight vector.
pub fn effective_sample_size(w: &[f64]) -> f64 {
    let s: f64 = w.iter().sum();
    let s2: f64 = w.iter().map(|v| v * v).sum();
    if s2 == 0.0 {
        0.0
    } else {
        s * s / s2
    }
}

fn weighted_difference(y: &[f64], z: &[bool], w: &[f64]) -> f64 {
    y.iter()
        .zip(z)
        .zip(w)
        .map(|((y, &t), w)| if t { w * y } else { -w * y })
        .sum()
}

fn control_weights(z: &[bool], w: &[f64]) -> Vec<f64> {
    z.iter().zip(w).filter(|(&t, _)| !t).map(|(_, &w)| w).collect()
}

fn iptw_point(input: &EstimatorInput, truncation: (f64, f64)) -> Result<(f64, Vec<f64>)> {
    let fit = fit_propensity(&input.x, &input.z)?;
    let w = att_weights(&input.z, &fit.fitted, truncation);
    Ok((weighted_difference(&input.y, &input.z, &w), w))
}

/// Inverse probability of treatment weighting for the treated.
pub fn iptw_att(input: &EstimatorInput, opts: &EstimatorOptions) -> Result<EstimateResult> {
    let (point, w) = iptw_point(input, opts.truncation)?;
    let cw = control_weights(&input.z, &w);
    let ess = effective_sample_size(&cw);
    let boot = bootstrap_interval(
        input,
        point,
        opts.bootstrap,
        opts.seed,
        opts.interval,
        opts.level,
        |d| iptw_point(d, opts.truncation).map(|(v, _)| v),
    )?;
    let mut out = EstimateResult::new(Method::IptwAtt, point, (boot.lo, boot.hi))
        .diag("control_ess", ess)
        .diag("max_control_weight", cw.iter().copied().fold(0.0, f64::max))
        .diag("bootstrap_failures", boot.failed as f64);
    if ess < 10.0 {
        out.warnings
            .push(format!("control effective sample size {ess:.2} is below 10"));
    }
    Ok(out)
}

struct DrParts {
    estimate: f64,
    /// Treated residuals `y - mu0_hat` shifted by the weighted control
    /// residual mean.
    effects: Vec<f64>,
    control_weights: Vec<f64>,
}

fn dr_point(
    input: &EstimatorInput,
    ps_cols: &[usize],
    outcome_cols: &[usize],
    truncation: (f64, f64),
) -> Result<DrParts> {
    let e = if ps_cols.is_empty() {
        vec![input.n_treated() as f64 / input.n() as f64; input.n()]
    } else {
        fit_propensity(&select_columns(&input.x, ps_cols), &input.z)?.fitted
    };
    let w = att_weights(&input.z, &e, truncation);
    let controls = input.controls();
    let treated = input.treated();
    let xo = select_columns(&input.x, outcome_cols);
    let keep = varying_within(&xo, &controls);
    let design = with_intercept(&select_columns(&xo, &keep));
    let dc = select_rows(&design, &controls);
    let yc = DVector::from_vec(pick(&input.y, &controls));
    let wc = pick(&w, &controls);
    let fit = weighted_least_squares(&dc, &yc, &wc)?;
    let mu0 = &design * &fit.coef;
    let correction: f64 = controls
        .iter()
        .map(|&i| w[i] * (input.y[i] - mu0[i]))
        .sum();
    let effects: Vec<f64> = treated
        .iter()
        .map(|&i| input.y[i] - mu0[i] - correction)
        .collect();
    Ok(DrParts {
        estimate: mean(&effects),
        effects,
        control_weights: wc,
    })
}

/// Doubly robust IPW + weighted regression adjustment, with separate
/// covariate sets for the propensity and outcome models. An empty
/// propensity set means a constant propensity.
pub fn ipw_ra_dr_columns(
    input: &EstimatorInput,
    ps_cols: &[usize],
    outcome_cols: &[usize],
    opts: &EstimatorOptions,
) -> Result<EstimateResult> {
    if let Some(&c) = ps_cols.iter().chain(outcome_cols).find(|&&c| c >= input.x.ncols()) {
        return Err(Error::invalid(format!("column {c} is out of range")));
    }
    let parts = dr_point(input, ps_cols, outcome_cols, opts.truncation)?;
    let boot = bootstrap_interval(
        input,
        parts.estimate,
        opts.bootstrap,
        opts.seed,
        opts.interval,
        opts.level,
        |d| dr_point(d, ps_cols, outcome_cols, opts.truncation).map(|p| p.estimate),
    )?;
    let ess = effective_sample_size(&parts.control_weights);
    Ok(
        EstimateResult::new(Method::IpwRaDr, parts.estimate, (boot.lo, boot.hi))
            .diag("control_ess", ess)
            .diag("bootstrap_failures", boot.failed as f64)
            .effects(parts.effects),
    )
}

/// Doubly robust IPW + regression adjustment on all covariates.
pub fn ipw_ra_dr(input: &EstimatorInput, opts: &EstimatorOptions) -> Result<EstimateResult> {
    let all: Vec<usize> = (0..input.x.ncols()).collect();
    ipw_ra_dr_columns(input, &all, &all, opts)
}
