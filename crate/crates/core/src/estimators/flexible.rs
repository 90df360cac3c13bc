//! Boosted-tree response surfaces fit separately to each group.

use super::gbm::{fit_gbm, fit_gbm_cv, GbmConfig};
use super::{
    bootstrap_interval, pick, EstimateResult, EstimatorInput, EstimatorOptions, Method,
};
use crate::error::{Error, Result};
use crate::linalg::select_rows;
use crate::stats::mean;

/// Smallest sample the flexible fit accepts.
pub const MIN_ROWS: usize = 100;

/// Cross-validated boosted surfaces evaluated on every row.
#[derive(Debug, Clone)]
pub struct FlexibleFit {
    pub mu0: Vec<f64>,
    pub mu1: Vec<f64>,
    pub rounds0: usize,
    pub rounds1: usize,
}

impl FlexibleFit {
    /// `mu1_hat - mu0_hat` for every row.
    pub fn effects(&self) -> Vec<f64> {
        self.mu1.iter().zip(&self.mu0).map(|(a, b)| a - b).collect()
    }
}

pub(crate) fn control_surface_cv(
    input: &EstimatorInput,
    opts: &EstimatorOptions,
) -> Result<(Vec<f64>, usize)> {
    let controls = input.controls();
    let fit = fit_gbm_cv(
        &select_rows(&input.x, &controls),
        &pick(&input.y, &controls),
        opts.cv_folds,
        &opts.gbm,
    )?;
    Ok((fit.model.predict(&input.x), fit.best_rounds))
}

/// Round budget and configuration for bootstrap refits: the cross-validated
/// round count capped at `bootstrap_rounds`, with the shrinkage raised when
/// capped so the total step size matches the full fit.
pub(crate) fn bootstrap_config(opts: &EstimatorOptions, best_rounds: usize) -> (usize, GbmConfig) {
    let cap = opts.bootstrap_rounds.max(1);
    if best_rounds <= cap {
        return (best_rounds, opts.gbm);
    }
    let cfg = GbmConfig {
        shrinkage: (opts.gbm.shrinkage * best_rounds as f64 / cap as f64).min(1.0),
        ..opts.gbm
    };
    (cap, cfg)
}

pub(crate) fn control_surface_fixed(
    input: &EstimatorInput,
    rounds: usize,
    cfg: &GbmConfig,
) -> Result<Vec<f64>> {
    let controls = input.controls();
    let model = fit_gbm(
        &select_rows(&input.x, &controls),
        &pick(&input.y, &controls),
        rounds,
        cfg,
    )?;
    Ok(model.predict(&input.x))
}

fn check_size(input: &EstimatorInput) -> Result<()> {
    if input.n() < MIN_ROWS {
        return Err(Error::invalid(format!(
            "boosted response surfaces need at least {MIN_ROWS} rows, found {}",
            input.n()
        )));
    }
    Ok(())
}

/// Fit both surfaces with cross-validated round counts.
pub fn flexible_fit(input: &EstimatorInput, opts: &EstimatorOptions) -> Result<FlexibleFit> {
    check_size(input)?;
    let (mu0, rounds0) = control_surface_cv(input, opts)?;
    let treated = input.treated();
    let fit1 = fit_gbm_cv(
        &select_rows(&input.x, &treated),
        &pick(&input.y, &treated),
        opts.cv_folds,
        &opts.gbm,
    )?;
    Ok(FlexibleFit {
        mu0,
        mu1: fit1.model.predict(&input.x),
        rounds0,
        rounds1: fit1.best_rounds,
    })
}

fn treated_residual_mean(input: &EstimatorInput, mu0: &[f64]) -> f64 {
    mean(
        &input
            .treated()
            .iter()
            .map(|&i| input.y[i] - mu0[i])
            .collect::<Vec<_>>(),
    )
}

/// Flexible response-surface estimator: the treated average of
/// `y - mu0_hat(x)`.
pub fn flexible_rs(input: &EstimatorInput, opts: &EstimatorOptions) -> Result<EstimateResult> {
    let fit = flexible_fit(input, opts)?;
    let treated = input.treated();
    let effects: Vec<f64> = treated.iter().map(|&i| input.y[i] - fit.mu0[i]).collect();
    let est = mean(&effects);
    let (rounds, cfg) = bootstrap_config(opts, fit.rounds0);
    let boot = bootstrap_interval(
        input,
        est,
        opts.bootstrap,
        opts.seed,
        opts.interval,
        opts.level,
        |d| control_surface_fixed(d, rounds, &cfg).map(|mu0| treated_residual_mean(d, &mu0)),
    )?;
    Ok(EstimateResult::new(Method::FlexibleRs, est, (boot.lo, boot.hi))
        .diag("rounds_mu0", fit.rounds0 as f64)
        .diag("rounds_mu1", fit.rounds1 as f64)
        .diag("bootstrap_failures", boot.failed as f64)
        .effects(effects))
}
